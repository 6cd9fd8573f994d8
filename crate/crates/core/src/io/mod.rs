//! Configuration files, checkpoints, CSV tables and SVG figures.

pub mod checkpoint;
pub mod config;
pub mod csv;
pub mod svg;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta, CHECKPOINT_VERSION};
pub use config::{env_variable_names, RunConfig};
pub use csv::{read_csv, read_csv_as, write_csv, Schema, Table};
