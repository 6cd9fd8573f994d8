//! Text checkpoints.
//!
//! ```text
//! hrllab checkpoint
//! format_version = 1
//! method = hrl_latent
//! latent_dim = 4
//! layout = 5x4,16x16
//! master_seed = 0
//! iteration = 252
//! source_path = path1
//! params = 357
//! 0.0000000000000000e0
//! ...
//! normalizer = none
//! end
//! ```
//!
//! Parameters are written with 17 significant digits, which reproduces every
//! `f64` exactly on reading. A stored normalizer is written as
//! `normalizer = <count>` followed by one `mean` and one `m2` line.

use std::fmt::Write as _;
use std::path::Path as FsPath;

use crate::ars::Normalizer;
use crate::error::{Error, Result};
use crate::experiments::{Method, Policy};
use crate::linear_policy::{Layout, ParamVector};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &str = "hrllab checkpoint";

#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointMeta {
    pub master_seed: u64,
    /// ARS iterations behind the parameters.
    pub iteration: usize,
    /// Path id or file the parameters were trained on.
    pub source_path: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub method: Method,
    pub latent_dim: usize,
    pub params: ParamVector,
    pub meta: CheckpointMeta,
    pub normalizer: Option<Normalizer>,
}

impl Checkpoint {
    pub fn new(
        method: Method,
        latent_dim: usize,
        params: ParamVector,
        meta: CheckpointMeta,
        normalizer: Option<Normalizer>,
    ) -> Result<Self> {
        let expected = method.layout(latent_dim);
        if params.layout() != &expected {
            return Err(Error::LayoutMismatch(format!(
                "{method} with latent_dim {latent_dim} needs layout {expected}, parameters have {}",
                params.layout()
            )));
        }
        Ok(Checkpoint {
            method,
            latent_dim: method.effective_latent_dim(latent_dim),
            params,
            meta,
            normalizer,
        })
    }

    pub fn policy(&self) -> Result<Policy> {
        Policy::from_params(self.method, self.latent_dim, self.params.values())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{MAGIC}");
        let _ = writeln!(out, "format_version = {CHECKPOINT_VERSION}");
        let _ = writeln!(out, "method = {}", self.method);
        let _ = writeln!(out, "latent_dim = {}", self.latent_dim);
        let _ = writeln!(out, "layout = {}", self.params.layout());
        let _ = writeln!(out, "master_seed = {}", self.meta.master_seed);
        let _ = writeln!(out, "iteration = {}", self.meta.iteration);
        let _ = writeln!(out, "source_path = {}", self.meta.source_path);
        let _ = writeln!(out, "params = {}", self.params.len());
        for v in self.params.values() {
            let _ = writeln!(out, "{}", format_real(*v));
        }
        match &self.normalizer {
            None => {
                let _ = writeln!(out, "normalizer = none");
            }
            Some(n) => {
                let _ = writeln!(out, "normalizer = {}", n.count());
                let join = |xs: &[f64]| xs.iter().map(|x| format_real(*x)).collect::<Vec<_>>().join(" ");
                let _ = writeln!(out, "mean = {}", join(n.mean()));
                let _ = writeln!(out, "m2 = {}", join(n.m2()));
            }
        }
        out.push_str("end\n");
        out
    }

    /// Parses checkpoint text; `file` only labels diagnostics.
    pub fn parse(text: &str, file: &FsPath) -> Result<Self> {
        let corrupt = |reason: String| Error::CorruptCheckpoint {
            file: file.to_path_buf(),
            reason,
        };
        let mut lines = text.lines();
        let mut next = |what: &str| lines.next().ok_or_else(|| corrupt(format!("file ends before {what}")));

        if next("header")? != MAGIC {
            return Err(corrupt("missing checkpoint header".into()));
        }
        let field = |line: &str, key: &str| -> Result<String> {
            line.strip_prefix(key)
                .and_then(|r| r.trim_start().strip_prefix('='))
                .map(|v| v.trim().to_string())
                .ok_or_else(|| corrupt(format!("expected '{key} = ...', got '{line}'")))
        };
        let int = |s: String, key: &str| -> Result<u64> {
            s.parse()
                .map_err(|_| corrupt(format!("{key} is not an integer: '{s}'")))
        };

        let version = int(field(next("format_version")?, "format_version")?, "format_version")?;
        if version != u64::from(CHECKPOINT_VERSION) {
            return Err(Error::CheckpointVersion {
                found: u32::try_from(version).unwrap_or(u32::MAX),
                expected: CHECKPOINT_VERSION,
            });
        }
        let method: Method = field(next("method")?, "method")?
            .parse()
            .map_err(|e: Error| corrupt(e.to_string()))?;
        let latent_dim = int(field(next("latent_dim")?, "latent_dim")?, "latent_dim")? as usize;
        let layout: Layout = field(next("layout")?, "layout")?
            .parse()
            .map_err(|e: Error| corrupt(e.to_string()))?;
        let master_seed = int(field(next("master_seed")?, "master_seed")?, "master_seed")?;
        let iteration = int(field(next("iteration")?, "iteration")?, "iteration")? as usize;
        let source_path = field(next("source_path")?, "source_path")?;
        let count = int(field(next("params")?, "params")?, "params")? as usize;
        if count != layout.len() {
            return Err(corrupt(format!(
                "layout {layout} holds {} values, header says {count}",
                layout.len()
            )));
        }
        let mut values = Vec::with_capacity(count);
        for i in 0..count {
            let line = next(&format!("parameter {i} of {count}"))?;
            values.push(
                parse_real(line.trim()).ok_or_else(|| corrupt(format!("parameter {i} is not a number: '{line}'")))?,
            );
        }

        let normalizer_line = field(next("normalizer")?, "normalizer")?;
        let normalizer = if normalizer_line == "none" {
            None
        } else {
            let n = int(normalizer_line, "normalizer")?;
            let mut vector = |key: &str| -> Result<Vec<f64>> {
                field(next(key)?, key)?
                    .split_whitespace()
                    .map(|s| parse_real(s).ok_or_else(|| corrupt(format!("{key} entry is not a number: '{s}'"))))
                    .collect()
            };
            let mean = vector("mean")?;
            let m2 = vector("m2")?;
            Some(Normalizer::from_parts(n, mean, m2).map_err(|e| corrupt(e.to_string()))?)
        };
        if next("end marker")? != "end" {
            return Err(corrupt("missing end marker".into()));
        }

        let params = ParamVector::new(values, layout).map_err(|e| corrupt(e.to_string()))?;
        Checkpoint::new(
            method,
            latent_dim,
            params,
            CheckpointMeta {
                master_seed,
                iteration,
                source_path,
            },
            normalizer,
        )
    }
}

pub fn format_real(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn parse_real(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

pub fn save_checkpoint(checkpoint: &Checkpoint, file: &FsPath) -> Result<()> {
    std::fs::write(file, checkpoint.to_text()).map_err(|e| Error::io(file, e))
}

pub fn load_checkpoint(file: &FsPath) -> Result<Checkpoint> {
    let text = std::fs::read_to_string(file).map_err(|e| Error::io(file, e))?;
    Checkpoint::parse(&text, file)
}
