//! Training, transfer and analysis pipelines built on the executor and ARS.

mod expert;
mod objectives;
mod pipelines;

use std::fmt;
use std::str::FromStr;

use crate::ars::{ArsConfig, IterationRecord, Normalizer};
use crate::error::{Error, Result};
use crate::hrl::{run_episode, run_flat_episode, EpisodeLog, ExpertPolicy, FlatPolicy, HrlPolicy, RolloutOptions};
use crate::linear_policy::{unflatten_values, Layout, MapShape, ParamVector};
use crate::pmtg::ACTION_DIM;
use crate::sim::{load_path, EnvConfig, Path, Task, LOW_OBS_DIM};

pub use expert::{
    expert_episode, forward_reward, steer_reward, stratified_commands, ExpertEpisode, ExpertRewardConfig, ExpertStep,
    SteerRewardMode, SteerWindow,
};
pub use objectives::{ExpertLowObjective, PolicyObjective};
pub use pipelines::{
    eval_trajectory, latent_sweep, low_level_mask, pretrain_expert_ll, train_expert_hl, train_flat, train_hrl,
    train_method, transfer, transfer_init, SweepRow, SweepSpec,
};

/// Fraction of the start-to-goal distance an episode must cover to count
/// as solving a path.
pub const SUCCESS_FRACTION: f64 = 0.9;

pub fn success_threshold(path: &Path) -> f64 {
    SUCCESS_FRACTION * path.progress_bound()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    HrlLatent,
    Flat,
    /// Expert hierarchy: steering high level over a pre-trained low level.
    Expert,
    /// The pre-trained expert low level on its own.
    ExpertLow,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::HrlLatent => "hrl_latent",
            Method::Flat => "flat",
            Method::Expert => "expert",
            Method::ExpertLow => "expert_low",
        }
    }

    /// Latent width implied by the method; `latent_dim` applies to
    /// [`Method::HrlLatent`] only.
    pub fn effective_latent_dim(&self, latent_dim: usize) -> usize {
        match self {
            Method::HrlLatent => latent_dim,
            Method::Flat => 0,
            Method::Expert | Method::ExpertLow => 1,
        }
    }

    pub fn layout(&self, latent_dim: usize) -> Layout {
        match self {
            Method::HrlLatent => HrlPolicy::layout(latent_dim),
            Method::Flat => FlatPolicy::layout(),
            Method::Expert => ExpertPolicy::layout(),
            Method::ExpertLow => Layout::new(vec![MapShape::new(ACTION_DIM, LOW_OBS_DIM + 1)]).expect("one map"),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hrl_latent" | "hrl" => Ok(Method::HrlLatent),
            "flat" => Ok(Method::Flat),
            "expert" | "expert_hl" | "expert-hl" => Ok(Method::Expert),
            "expert_low" => Ok(Method::ExpertLow),
            other => Err(Error::Config(format!("unknown method '{other}'"))),
        }
    }
}

/// A policy of any runnable kind.
#[derive(Clone, Debug, PartialEq)]
pub enum Policy {
    Hrl(HrlPolicy),
    Flat(FlatPolicy),
    Expert(ExpertPolicy),
}

impl Policy {
    pub fn from_params(method: Method, latent_dim: usize, params: &[f64]) -> Result<Self> {
        match method {
            Method::HrlLatent => Ok(Policy::Hrl(HrlPolicy::from_params(params, latent_dim)?)),
            Method::Flat => {
                let map = unflatten_values(params, &FlatPolicy::layout())?.pop().expect("one map");
                Ok(Policy::Flat(FlatPolicy::new(map)?))
            }
            Method::Expert => {
                let mut maps = unflatten_values(params, &ExpertPolicy::layout())?;
                let low = maps.pop().expect("two maps");
                let high = maps.pop().expect("two maps");
                Ok(Policy::Expert(ExpertPolicy::from_maps(high, low)?))
            }
            Method::ExpertLow => Err(Error::Config(
                "an expert low level alone cannot follow a path; train its high level first".into(),
            )),
        }
    }

    pub fn method(&self) -> Method {
        match self {
            Policy::Hrl(_) => Method::HrlLatent,
            Policy::Flat(_) => Method::Flat,
            Policy::Expert(_) => Method::Expert,
        }
    }

    pub fn latent_dim(&self) -> usize {
        match self {
            Policy::Hrl(p) => p.latent_dim(),
            Policy::Flat(_) => 0,
            Policy::Expert(_) => 1,
        }
    }

    /// The hierarchical structure, when there is one.
    pub fn hierarchy(&self) -> Option<&HrlPolicy> {
        match self {
            Policy::Hrl(p) => Some(p),
            Policy::Expert(p) => Some(p.inner()),
            Policy::Flat(_) => None,
        }
    }

    pub fn run(&self, task: &Task, cfg: &EnvConfig, opts: &RolloutOptions<'_>) -> Result<EpisodeLog> {
        match self {
            Policy::Hrl(p) => run_episode(p, task, cfg, opts),
            Policy::Flat(p) => run_flat_episode(p, task, cfg, opts),
            Policy::Expert(p) => run_episode(p.inner(), task, cfg, opts),
        }
    }
}

/// What to train and where.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub method: Method,
    /// Latent width for [`Method::HrlLatent`].
    pub latent_dim: usize,
    /// Built-in path id or path file.
    pub path: String,
    pub env: EnvConfig,
    pub ars: ArsConfig,
    pub num_seeds: usize,
    /// End a seed's run at the first iteration whose policy solves the path.
    pub stop_on_success: bool,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            method: Method::HrlLatent,
            latent_dim: 4,
            path: "path1".into(),
            env: EnvConfig::default(),
            ars: ArsConfig::default(),
            num_seeds: 5,
            stop_on_success: false,
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.method == Method::HrlLatent && self.latent_dim == 0 {
            return Err(Error::Config("latent_dim must be at least 1".into()));
        }
        if self.method == Method::ExpertLow {
            return Err(Error::Config(
                "use the expert pre-training pipeline for expert_low".into(),
            ));
        }
        if self.num_seeds == 0 {
            return Err(Error::Config("num_seeds must be at least 1".into()));
        }
        self.env.validate()?;
        self.ars.validate()
    }

    pub fn load_path(&self) -> Result<Path> {
        load_path(&self.path)
    }

    pub fn effective_latent_dim(&self) -> usize {
        self.method.effective_latent_dim(self.latent_dim)
    }

    /// Master seed of seed run `k`.
    pub fn seed_for(&self, k: usize) -> u64 {
        self.ars.master_seed.wrapping_add(k as u64)
    }
}

/// Outcome of one seed's training run.
#[derive(Clone, Debug)]
pub struct SeedRun {
    pub seed: u64,
    pub params: ParamVector,
    pub records: Vec<IterationRecord>,
    /// First iteration whose starting policy met the success threshold.
    pub solved_at: Option<usize>,
    /// Greedy return of the final parameters.
    pub final_return: f64,
    pub normalizer: Option<Normalizer>,
}

#[derive(Clone, Debug)]
pub struct TrainResult {
    pub method: Method,
    pub latent_dim: usize,
    pub path: String,
    pub threshold: f64,
    pub runs: Vec<SeedRun>,
    pub aggregate: Vec<AggregateRow>,
}

impl TrainResult {
    /// The run with the highest final return; the earliest wins ties.
    pub fn best(&self) -> &SeedRun {
        let mut best = &self.runs[0];
        for run in &self.runs[1..] {
            if run.final_return > best.final_return {
                best = run;
            }
        }
        best
    }

    /// Median iterations-to-threshold; unsolved runs count as infinite.
    pub fn median_solved_at(&self) -> f64 {
        median(
            self.runs
                .iter()
                .map(|r| r.solved_at.map_or(f64::INFINITY, |i| i as f64))
                .collect(),
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AggregateRow {
    pub iteration: usize,
    pub mean_return: f64,
    /// Sample standard deviation over seeds divided by sqrt(seeds); 0 for one seed.
    pub stderr_return: f64,
    pub num_seeds: usize,
}

/// Per-iteration mean and standard error of the policy return across seeds.
///
/// Runs that stopped early hold their last value for the remaining
/// iterations.
pub fn aggregate_curves(curves: &[Vec<IterationRecord>]) -> Vec<AggregateRow> {
    let len = curves.iter().map(Vec::len).max().unwrap_or(0);
    let n = curves.len();
    (0..len)
        .map(|t| {
            let values: Vec<f64> = curves
                .iter()
                .filter_map(|c| c.get(t).or_else(|| c.last()).map(|r| r.policy_return))
                .collect();
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            let stderr = if values.len() > 1 {
                let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (values.len() - 1) as f64;
                var.sqrt() / (values.len() as f64).sqrt()
            } else {
                0.0
            };
            AggregateRow {
                iteration: t,
                mean_return: mean,
                stderr_return: stderr,
                num_seeds: n,
            }
        })
        .collect()
}

pub fn median(mut values: Vec<f64>) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(|a, b| a.total_cmp(b));
    let m = values.len() / 2;
    if values.len() % 2 == 1 {
        values[m]
    } else {
        (values[m - 1] + values[m]) / 2.0
    }
}

/// Smallest arc (radians) containing every heading, ignoring cells that did
/// not move.
pub fn heading_spread(rows: &[SweepRow]) -> f64 {
    let mut headings: Vec<f64> = rows.iter().filter(|r| r.distance > 1e-9).map(|r| r.heading).collect();
    if headings.len() < 2 {
        return 0.0;
    }
    headings.sort_by(|a, b| a.total_cmp(b));
    let tau = std::f64::consts::TAU;
    let mut widest_gap = headings[0] + tau - headings[headings.len() - 1];
    for w in headings.windows(2) {
        widest_gap = widest_gap.max(w[1] - w[0]);
    }
    tau - widest_gap
}

/// Longest over shortest distance covered across the sweep.
pub fn distance_ratio(rows: &[SweepRow]) -> f64 {
    let max = rows.iter().map(|r| r.distance).fold(0.0, f64::max);
    let min = rows.iter().map(|r| r.distance).fold(f64::INFINITY, f64::min);
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}
