//! CSV tables with fixed schemas.
//!
//! Reals are written with 17 significant digits and read back exactly;
//! integer columns are written without a fractional part.

use std::fmt;
use std::path::Path as FsPath;

use crate::ars::IterationRecord;
use crate::error::{Error, Result};
use crate::experiments::{AggregateRow, SweepRow};
use crate::hrl::EpisodeLog;

use super::checkpoint::{format_real, parse_real};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Schema {
    LearningCurve,
    Aggregate,
    /// Per-tick rollout record with `latent_dim` latent columns.
    Trajectory {
        latent_dim: usize,
    },
    Sweep {
        latent_dim: usize,
    },
}

impl Schema {
    pub fn name(&self) -> &'static str {
        match self {
            Schema::LearningCurve => "learning_curve",
            Schema::Aggregate => "aggregate",
            Schema::Trajectory { .. } => "trajectory",
            Schema::Sweep { .. } => "sweep",
        }
    }

    pub fn columns(&self) -> Vec<String> {
        let fixed = |names: &[&str]| names.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        let latents = |k: usize| (0..k).map(|i| format!("latent_{i}")).collect::<Vec<_>>();
        match *self {
            Schema::LearningCurve => fixed(&[
                "iteration",
                "mean_return",
                "max_return",
                "update_norm",
                "wall_time_s",
                "policy_return",
            ]),
            Schema::Aggregate => fixed(&["iteration", "mean_return", "stderr_return", "num_seeds"]),
            Schema::Trajectory { latent_dim } => {
                let mut c = fixed(&[
                    "step",
                    "t_s",
                    "x_m",
                    "y_m",
                    "yaw_rad",
                    "reward",
                    "decision_flag",
                    "duration_remaining",
                ]);
                c.extend(latents(latent_dim));
                c
            }
            Schema::Sweep { latent_dim } => {
                let mut c = latents(latent_dim);
                c.extend(fixed(&["dx_m", "dy_m", "distance_m", "heading_rad"]));
                c
            }
        }
    }

    fn is_integer_column(&self, index: usize) -> bool {
        match self {
            Schema::LearningCurve => index == 0,
            Schema::Aggregate => index == 0 || index == 3,
            Schema::Trajectory { .. } => matches!(index, 0 | 6 | 7),
            Schema::Sweep { .. } => false,
        }
    }

    /// Recognizes a schema from a header row.
    pub fn detect(header: &[String]) -> Option<Schema> {
        let latent_count = header.iter().filter(|h| h.starts_with("latent_")).count();
        [
            Schema::LearningCurve,
            Schema::Aggregate,
            Schema::Trajectory {
                latent_dim: latent_count,
            },
            Schema::Sweep {
                latent_dim: latent_count,
            },
        ]
        .into_iter()
        .find(|s| s.columns() == header)
    }

    fn violation(&self, reason: String) -> Error {
        Error::Schema {
            schema: self.name().into(),
            reason,
        }
    }

    /// Checks every row before anything is written.
    pub fn check_rows(&self, rows: &[Vec<f64>]) -> Result<()> {
        let width = self.columns().len();
        for (r, row) in rows.iter().enumerate() {
            if row.len() != width {
                return Err(self.violation(format!("row {r} has {} fields, expected {width}", row.len())));
            }
            for (c, v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(self.violation(format!("row {r} column {c} is not finite")));
                }
                if self.is_integer_column(c) && (v.fract() != 0.0 || *v < 0.0) {
                    return Err(self.violation(format!("row {r} column {c} must be a non-negative integer, got {v}")));
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for Schema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub schema: Schema,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.schema.columns().iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[idx]).collect())
    }
}

pub fn write_csv(rows: &[Vec<f64>], schema: Schema, file: &FsPath) -> Result<()> {
    schema.check_rows(rows)?;
    let mut w = csv::Writer::from_path(file)?;
    w.write_record(schema.columns())?;
    for row in rows {
        let fields: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, v)| {
                if schema.is_integer_column(c) {
                    format!("{}", *v as u64)
                } else {
                    format_real(*v)
                }
            })
            .collect();
        w.write_record(&fields)?;
    }
    w.flush().map_err(|e| Error::io(file, e))
}

/// Reads any known schema, rejecting unknown headers and ragged or
/// non-numeric rows.
pub fn read_csv(file: &FsPath) -> Result<Table> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(file)?;
    let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
    let schema = Schema::detect(&header).ok_or_else(|| Error::Schema {
        schema: "unknown".into(),
        reason: format!("unrecognized header in {}: {}", file.display(), header.join(",")),
    })?;
    let mut rows = Vec::new();
    for (i, record) in r.records().enumerate() {
        let record = record?;
        let row = record
            .iter()
            .map(|s| parse_real(s).ok_or_else(|| schema.violation(format!("row {i}: '{s}' is not a finite number"))))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    schema.check_rows(&rows)?;
    Ok(Table { schema, rows })
}

/// Reads a file that must have `schema`.
pub fn read_csv_as(file: &FsPath, schema: Schema) -> Result<Table> {
    let table = read_csv(file)?;
    if table.schema != schema {
        return Err(schema.violation(format!("{} has schema {}", file.display(), table.schema)));
    }
    Ok(table)
}

pub fn learning_curve_rows(records: &[IterationRecord]) -> Vec<Vec<f64>> {
    records
        .iter()
        .map(|r| {
            vec![
                r.iteration as f64,
                r.mean_return,
                r.max_return,
                r.update_norm,
                r.wall_time,
                r.policy_return,
            ]
        })
        .collect()
}

pub fn aggregate_rows(rows: &[AggregateRow]) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|r| vec![r.iteration as f64, r.mean_return, r.stderr_return, r.num_seeds as f64])
        .collect()
}

pub fn trajectory_rows(log: &EpisodeLog) -> Vec<Vec<f64>> {
    log.steps
        .iter()
        .map(|s| {
            let mut row = vec![
                s.step as f64,
                s.time,
                s.position[0],
                s.position[1],
                s.yaw,
                s.reward,
                if s.decision { 1.0 } else { 0.0 },
                f64::from(s.duration_remaining),
            ];
            row.extend(&s.latent);
            row
        })
        .collect()
}

pub fn sweep_rows(rows: &[SweepRow]) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|r| {
            let mut row = r.latent.clone();
            row.extend([r.dx, r.dy, r.distance, r.heading]);
            row
        })
        .collect()
}
