use crate::ars::rng::policy_eval_seed;
use crate::ars::{train, ArsConfig, EvalContext, Normalizer, Objective, TrainOptions};
use crate::error::{Error, Result};
use crate::hrl::{run_low_level_fixed, EpisodeLog, HrlPolicy, RolloutOptions};
use crate::linear_policy::{flatten, LinearMap, ParamVector};
use crate::sim::{EnvConfig, Task};

use super::expert::ExpertRewardConfig;
use super::objectives::{ExpertLowObjective, PolicyObjective};
use super::{aggregate_curves, success_threshold, ExperimentSpec, Method, Policy, SeedRun, TrainResult};

/// Parameters frozen when only the high level trains.
pub fn low_level_mask(latent_dim: usize) -> Vec<bool> {
    let layout = HrlPolicy::layout(latent_dim);
    let low = layout.slice_of(1);
    (0..layout.len()).map(|i| low.contains(&i)).collect()
}

fn run_seed<O: Objective>(objective: &O, init: &ParamVector, ars: &ArsConfig, opts: &TrainOptions) -> Result<SeedRun> {
    let outcome = train(objective, init, ars, opts)?;
    let ctx = EvalContext {
        seed: policy_eval_seed(ars.master_seed, outcome.records.len() as u64),
        normalizer: outcome.normalizer.as_ref(),
        collect_stats: false,
    };
    let final_return = objective.evaluate(&outcome.params, &ctx)?.total_return;
    Ok(SeedRun {
        seed: ars.master_seed,
        params: outcome.params,
        records: outcome.records,
        solved_at: outcome.solved_at,
        final_return,
        normalizer: outcome.normalizer,
    })
}

/// Trains `spec.num_seeds` independent runs from `init` and aggregates them.
///
/// Seed `k` uses master seed `spec.ars.master_seed + k`. Coordinates marked
/// in `mask` never change.
pub fn train_method(
    spec: &ExperimentSpec,
    init: &ParamVector,
    mask: Option<Vec<bool>>,
    normalizer: Option<Normalizer>,
) -> Result<TrainResult> {
    spec.validate()?;
    let latent_dim = spec.effective_latent_dim();
    let layout = spec.method.layout(latent_dim);
    if init.layout() != &layout {
        return Err(Error::LayoutMismatch(format!(
            "initial parameters have layout {}, {} needs {}",
            init.layout(),
            spec.method,
            layout
        )));
    }
    let path = spec.load_path()?;
    let threshold = success_threshold(&path);
    let objective = PolicyObjective {
        method: spec.method,
        latent_dim,
        task: Task::Corridor(path),
        env: spec.env.clone(),
    };
    let mut runs = Vec::with_capacity(spec.num_seeds);
    for k in 0..spec.num_seeds {
        let mut ars = spec.ars.clone();
        ars.master_seed = spec.seed_for(k);
        let opts = TrainOptions {
            mask: mask.clone(),
            stop_at: spec.stop_on_success.then_some(threshold),
            record_wall_time: false,
            normalizer: normalizer.clone(),
        };
        let run = run_seed(&objective, init, &ars, &opts)?;
        log::info!(
            "{} seed {}: final return {:.4}, solved at {:?}",
            spec.method,
            run.seed,
            run.final_return,
            run.solved_at
        );
        runs.push(run);
    }
    let curves: Vec<_> = runs.iter().map(|r| r.records.clone()).collect();
    Ok(TrainResult {
        method: spec.method,
        latent_dim,
        path: spec.path.clone(),
        threshold,
        aggregate: aggregate_curves(&curves),
        runs,
    })
}

fn expect_method(spec: &ExperimentSpec, method: Method) -> Result<()> {
    if spec.method != method {
        return Err(Error::Config(format!(
            "pipeline needs method {method}, spec has {}",
            spec.method
        )));
    }
    Ok(())
}

/// Latent-command hierarchy trained from zero on `spec.path`.
pub fn train_hrl(spec: &ExperimentSpec) -> Result<TrainResult> {
    expect_method(spec, Method::HrlLatent)?;
    spec.validate()?;
    train_method(
        spec,
        &ParamVector::zeros(HrlPolicy::layout(spec.latent_dim)),
        None,
        None,
    )
}

/// Flat 16 -> 16 baseline trained from zero.
pub fn train_flat(spec: &ExperimentSpec) -> Result<TrainResult> {
    expect_method(spec, Method::Flat)?;
    train_method(spec, &ParamVector::zeros(Method::Flat.layout(0)), None, None)
}

/// Pre-trains the expert steering low level in the open arena.
pub fn pretrain_expert_ll(reward: &ExpertRewardConfig, ars: &ArsConfig, env: &EnvConfig) -> Result<SeedRun> {
    reward.validate()?;
    env.validate()?;
    let objective = ExpertLowObjective {
        reward: reward.clone(),
        env: env.clone(),
    };
    run_seed(
        &objective,
        &ParamVector::zeros(Method::ExpertLow.layout(1)),
        ars,
        &TrainOptions::default(),
    )
}

/// Trains the expert high level on `spec.path` over a frozen low level.
pub fn train_expert_hl(
    expert_low: &LinearMap,
    normalizer: Option<Normalizer>,
    spec: &ExperimentSpec,
) -> Result<TrainResult> {
    expect_method(spec, Method::Expert)?;
    let init = flatten(&[LinearMap::zeros(2, crate::sim::HIGH_OBS_DIM), expert_low.clone()])?;
    if init.layout() != &Method::Expert.layout(1) {
        return Err(Error::LayoutMismatch(format!(
            "expert low level must be {}, got {}x{}",
            Method::Expert.layout(1).shapes()[1],
            expert_low.rows(),
            expert_low.cols()
        )));
    }
    train_method(spec, &init, Some(low_level_mask(1)), normalizer)
}

/// Retrains only the high level of `source` on `spec.path`.
///
/// The low level is copied and frozen; the high level restarts from zero.
pub fn transfer(source: &HrlPolicy, normalizer: Option<Normalizer>, spec: &ExperimentSpec) -> Result<TrainResult> {
    expect_method(spec, Method::HrlLatent)?;
    if source.latent_dim() != spec.latent_dim {
        return Err(Error::dim("transfer latent_dim", spec.latent_dim, source.latent_dim()));
    }
    let init = transfer_init(source);
    train_method(spec, &init, Some(low_level_mask(source.latent_dim())), normalizer)
}

/// Source low level with a zeroed high level.
pub fn transfer_init(source: &HrlPolicy) -> ParamVector {
    let high = LinearMap::zeros(source.high().rows(), source.high().cols());
    flatten(&[high, source.low().clone()]).expect("two maps")
}

/// Grid of latent commands held fixed in the open arena.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    /// Values per latent dimension; cells are their Cartesian product.
    pub grid: Vec<Vec<f64>>,
    pub steps_per_cell: usize,
}

impl SweepSpec {
    /// `points` evenly spaced values over [-1, 1] in each of `dims` dimensions.
    pub fn uniform(dims: usize, points: usize, steps_per_cell: usize) -> Self {
        let axis: Vec<f64> = if points == 1 {
            vec![0.0]
        } else {
            (0..points)
                .map(|i| -1.0 + 2.0 * i as f64 / (points - 1) as f64)
                .collect()
        };
        SweepSpec {
            grid: vec![axis; dims],
            steps_per_cell,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() || self.grid.iter().any(Vec::is_empty) {
            return Err(Error::Config(
                "sweep grid needs at least one value per dimension".into(),
            ));
        }
        if self.grid.iter().flatten().any(|v| !(-1.0..=1.0).contains(v)) {
            return Err(Error::Config("sweep grid values must lie in [-1, 1]".into()));
        }
        if self.steps_per_cell == 0 {
            return Err(Error::Config("sweep steps_per_cell must be at least 1".into()));
        }
        Ok(())
    }

    /// Grid cells in row-major order, the last dimension varying fastest.
    pub fn cells(&self) -> Vec<Vec<f64>> {
        let mut cells = vec![Vec::new()];
        for axis in &self.grid {
            cells = cells
                .into_iter()
                .flat_map(|prefix| {
                    axis.iter().map(move |&v| {
                        let mut c = prefix.clone();
                        c.push(v);
                        c
                    })
                })
                .collect();
        }
        cells
    }
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec::uniform(2, 9, 1000)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub latent: Vec<f64>,
    pub dx: f64,
    pub dy: f64,
    pub distance: f64,
    pub heading: f64,
}

/// Net displacement of the low level under each fixed latent command.
pub fn latent_sweep(
    policy: &HrlPolicy,
    normalizer: Option<&Normalizer>,
    sweep: &SweepSpec,
    env: &EnvConfig,
) -> Result<Vec<SweepRow>> {
    sweep.validate()?;
    if sweep.grid.len() != policy.latent_dim() {
        return Err(Error::dim(
            "sweep grid dimensions",
            policy.latent_dim(),
            sweep.grid.len(),
        ));
    }
    let mut cfg = env.clone();
    cfg.max_steps = sweep.steps_per_cell;
    let opts = RolloutOptions {
        normalizer,
        ..RolloutOptions::default()
    };
    sweep
        .cells()
        .into_iter()
        .map(|latent| {
            let log = run_low_level_fixed(policy, &latent, &Task::OpenArena, &cfg, sweep.steps_per_cell, &opts)?;
            let dx = log.end[0] - log.start[0];
            let dy = log.end[1] - log.start[1];
            Ok(SweepRow {
                latent,
                dx,
                dy,
                distance: dx.hypot(dy),
                heading: dy.atan2(dx),
            })
        })
        .collect()
}

/// A single recorded greedy rollout.
pub fn eval_trajectory(
    policy: &Policy,
    normalizer: Option<&Normalizer>,
    task: &Task,
    env: &EnvConfig,
) -> Result<EpisodeLog> {
    let opts = RolloutOptions {
        seed: policy_eval_seed(0, 0),
        record_steps: true,
        normalizer,
        collect_stats: false,
    };
    policy.run(task, env, &opts)
}
