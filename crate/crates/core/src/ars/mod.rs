//! Augmented Random Search.
//!
//! Each iteration probes `N` random directions on both sides of the current
//! parameters, keeps the `b` directions whose better side scored highest,
//! and steps along the reward-weighted sum of those directions, scaled by
//! the standard deviation of the kept rewards.
//!
//! All randomness is keyed by `(master_seed, iteration, direction, ...)` and
//! every reduction runs in direction order, so results do not depend on how
//! many worker threads evaluate the rollouts.

pub mod normalizer;
pub mod rng;

use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linear_policy::ParamVector;
pub use normalizer::{normalizer_apply, normalizer_update, Normalizer};
pub use rng::{sample_direction, DirectionDistribution};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ArsVersion {
    /// Raw observations.
    V1,
    /// Observations whitened by a running [`Normalizer`].
    V2,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArsConfig {
    pub step_size: f64,
    pub num_directions: usize,
    pub top_directions: usize,
    pub noise_std: f64,
    pub version: ArsVersion,
    pub distribution: DirectionDistribution,
    pub master_seed: u64,
    pub iterations: usize,
    pub rollouts_per_eval: usize,
    /// Worker threads for rollouts; 0 uses all cores. Never affects results.
    pub workers: usize,
}

impl Default for ArsConfig {
    fn default() -> Self {
        ArsConfig {
            step_size: 0.01,
            num_directions: 8,
            top_directions: 4,
            noise_std: 0.02,
            version: ArsVersion::V1,
            distribution: DirectionDistribution::Gaussian,
            master_seed: 0,
            iterations: 300,
            rollouts_per_eval: 1,
            workers: 0,
        }
    }
}

impl ArsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::Config(format!(
                "ars step_size must be positive, got {}",
                self.step_size
            )));
        }
        if !(self.noise_std > 0.0 && self.noise_std.is_finite()) {
            return Err(Error::Config(format!(
                "ars noise_std must be positive, got {}",
                self.noise_std
            )));
        }
        if self.num_directions == 0 {
            return Err(Error::Config("ars num_directions must be at least 1".into()));
        }
        if self.top_directions == 0 || self.top_directions > self.num_directions {
            return Err(Error::Config(format!(
                "ars top_directions must be in [1, {}], got {}",
                self.num_directions, self.top_directions
            )));
        }
        if self.rollouts_per_eval == 0 {
            return Err(Error::Config("ars rollouts_per_eval must be at least 1".into()));
        }
        Ok(())
    }
}

/// Per-evaluation context handed to an [`Objective`].
#[derive(Clone, Copy, Debug)]
pub struct EvalContext<'a> {
    pub seed: u64,
    /// Whitening to apply to observations (V2 only).
    pub normalizer: Option<&'a Normalizer>,
    /// Whether raw observation statistics should be returned.
    pub collect_stats: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub total_return: f64,
    /// Statistics of the raw observations seen, when requested.
    pub stats: Option<Normalizer>,
}

impl From<f64> for Evaluation {
    fn from(total_return: f64) -> Self {
        Evaluation {
            total_return,
            stats: None,
        }
    }
}

/// A function to maximize; must be pure given its context.
pub trait Objective: Sync {
    fn evaluate(&self, params: &ParamVector, ctx: &EvalContext<'_>) -> Result<Evaluation>;

    /// Dimension of the observations it normalizes, if it supports V2.
    fn observation_dim(&self) -> Option<usize> {
        None
    }
}

/// Adapts a plain `Fn(params, seed) -> return` closure.
pub struct FnObjective<F>(pub F);

impl<F> Objective for FnObjective<F>
where
    F: Fn(&[f64], u64) -> f64 + Sync,
{
    fn evaluate(&self, params: &ParamVector, ctx: &EvalContext<'_>) -> Result<Evaluation> {
        Ok((self.0)(params.values(), ctx.seed).into())
    }
}

/// Both-sided probe of one direction.
#[derive(Clone, Debug, PartialEq)]
pub struct DirectionEval {
    pub index: usize,
    pub direction: Vec<f64>,
    pub r_plus: f64,
    pub r_minus: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Mean over the 2N perturbed returns.
    pub mean_return: f64,
    /// Max over the 2N perturbed returns.
    pub max_return: f64,
    /// Euclidean norm of the parameter change.
    pub update_norm: f64,
    /// Seconds since training started; 0 unless wall time recording is on.
    pub wall_time: f64,
    /// Return of the unperturbed parameters this iteration started from.
    pub policy_return: f64,
}

/// Samples a direction and zeroes the frozen coordinates.
fn masked_direction(cfg: &ArsConfig, iteration: usize, k: usize, dim: usize, mask: Option<&[bool]>) -> Vec<f64> {
    let mut d = rng::sample_direction_with(cfg.distribution, cfg.master_seed, iteration as u64, k as u64, dim);
    if let Some(mask) = mask {
        for (v, &frozen) in d.iter_mut().zip(mask) {
            if frozen {
                *v = 0.0;
            }
        }
    }
    d
}

fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
}

/// Evaluations plus merged observation statistics (V2).
pub struct PerturbationBatch {
    pub evals: Vec<DirectionEval>,
    pub stats: Option<Normalizer>,
}

/// Probes `N` directions around `theta` on a pool of `cfg.workers` threads.
pub fn evaluate_perturbations<O: Objective + ?Sized>(
    theta: &ParamVector,
    objective: &O,
    cfg: &ArsConfig,
    iteration: usize,
) -> Result<Vec<DirectionEval>> {
    let pool = thread_pool(cfg.workers)?;
    Ok(evaluate_batch(&pool, theta, objective, cfg, iteration, None, None)?.evals)
}

fn evaluate_batch<O: Objective + ?Sized>(
    pool: &rayon::ThreadPool,
    theta: &ParamVector,
    objective: &O,
    cfg: &ArsConfig,
    iteration: usize,
    mask: Option<&[bool]>,
    normalizer: Option<&Normalizer>,
) -> Result<PerturbationBatch> {
    let n = cfg.num_directions;
    let rollouts = cfg.rollouts_per_eval;
    let dim = theta.len();
    let collect_stats = cfg.version == ArsVersion::V2 && normalizer.is_some();

    let directions: Vec<Vec<f64>> = pool.install(|| {
        (0..n)
            .into_par_iter()
            .map(|k| masked_direction(cfg, iteration, k, dim, mask))
            .collect()
    });

    // job order: direction, sign (+ first), rollout
    let jobs: Vec<(usize, bool, usize)> = (0..n)
        .flat_map(|k| {
            [true, false]
                .into_iter()
                .flat_map(move |s| (0..rollouts).map(move |r| (k, s, r)))
        })
        .collect();
    let results: Vec<Result<Evaluation>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(k, positive, r)| {
                let sign = if positive { cfg.noise_std } else { -cfg.noise_std };
                let values: Vec<f64> = theta
                    .values()
                    .iter()
                    .zip(&directions[k])
                    .map(|(t, d)| t + sign * d)
                    .collect();
                let probe = theta.with_values(values)?;
                let ctx = EvalContext {
                    seed: rng::rollout_seed(cfg.master_seed, iteration as u64, k as u64, positive, r as u64),
                    normalizer,
                    collect_stats,
                };
                objective.evaluate(&probe, &ctx)
            })
            .collect()
    });

    let mut sums = vec![[0.0f64; 2]; n];
    let mut stats = normalizer.map(|nz| Normalizer::new(nz.dim()));
    for (&(k, positive, _), result) in jobs.iter().zip(results) {
        let sign = if positive { '+' } else { '-' };
        let eval = result.map_err(|e| Error::Objective {
            direction: k,
            sign,
            source: Box::new(e),
        })?;
        if !eval.total_return.is_finite() {
            return Err(Error::Objective {
                direction: k,
                sign,
                source: Box::new(Error::NonFinite("objective return".into())),
            });
        }
        sums[k][usize::from(!positive)] += eval.total_return;
        if let (Some(acc), Some(s)) = (stats.as_mut(), eval.stats.as_ref()) {
            acc.merge(s)?;
        }
    }
    let evals = directions
        .into_iter()
        .zip(sums)
        .enumerate()
        .map(|(index, (direction, [p, m]))| DirectionEval {
            index,
            direction,
            r_plus: p / rollouts as f64,
            r_minus: m / rollouts as f64,
        })
        .collect();
    Ok(PerturbationBatch {
        evals,
        stats: if collect_stats { stats } else { None },
    })
}

/// Indices of the `b` best directions by `max(r+, r-)`, ties to the lower index.
fn top_directions(evals: &[DirectionEval], b: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..evals.len()).collect();
    order.sort_by(|&i, &j| {
        let si = evals[i].r_plus.max(evals[i].r_minus);
        let sj = evals[j].r_plus.max(evals[j].r_minus);
        sj.total_cmp(&si).then(evals[i].index.cmp(&evals[j].index))
    });
    order.truncate(b);
    order
}

/// One ARS step. Coordinates frozen by `mask` are copied through unchanged.
pub fn ars_update(theta: &ParamVector, evals: &[DirectionEval], cfg: &ArsConfig) -> Result<ParamVector> {
    ars_update_masked(theta, evals, cfg, None)
}

pub fn ars_update_masked(
    theta: &ParamVector,
    evals: &[DirectionEval],
    cfg: &ArsConfig,
    mask: Option<&[bool]>,
) -> Result<ParamVector> {
    if evals.len() != cfg.num_directions {
        return Err(Error::dim("ars evaluations", cfg.num_directions, evals.len()));
    }
    if evals.iter().any(|e| !e.r_plus.is_finite() || !e.r_minus.is_finite()) {
        return Err(Error::NonFinite("ars rewards".into()));
    }
    if let Some(e) = evals.iter().find(|e| e.direction.len() != theta.len()) {
        return Err(Error::dim("ars direction", theta.len(), e.direction.len()));
    }
    let b = cfg.top_directions;
    let kept = top_directions(evals, b);

    let rewards: Vec<f64> = kept.iter().flat_map(|&i| [evals[i].r_plus, evals[i].r_minus]).collect();
    let mean = rewards.iter().sum::<f64>() / rewards.len() as f64;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / rewards.len() as f64;
    let mut sigma = var.sqrt();
    if sigma < 1e-8 {
        sigma = 1.0;
    }

    let mut step = vec![0.0; theta.len()];
    for &i in &kept {
        let w = evals[i].r_plus - evals[i].r_minus;
        for (s, d) in step.iter_mut().zip(&evals[i].direction) {
            *s += w * d;
        }
    }
    let scale = cfg.step_size / (b as f64 * sigma);
    let mut next = theta.clone();
    for (i, (t, s)) in next.values_mut().iter_mut().zip(&step).enumerate() {
        if mask.is_some_and(|m| m[i]) {
            continue;
        }
        *t += scale * s;
    }
    if next.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("ars updated parameters".into()));
    }
    Ok(next)
}

#[derive(Clone, Debug, Default)]
pub struct TrainOptions {
    /// `true` marks a coordinate that must never change.
    pub mask: Option<Vec<bool>>,
    /// Stop as soon as the unperturbed policy reaches this return.
    pub stop_at: Option<f64>,
    pub record_wall_time: bool,
    /// Starting statistics for V2.
    pub normalizer: Option<Normalizer>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ParamVector,
    pub records: Vec<IterationRecord>,
    /// First iteration whose starting policy met `stop_at`.
    pub solved_at: Option<usize>,
    pub normalizer: Option<Normalizer>,
}

/// Runs `cfg.iterations` ARS iterations from `init`.
///
/// Each record describes one iteration: the return of the parameters it
/// started from, the perturbed returns around them, and the step taken.
/// When `stop_at` is met the run ends with a terminal record whose
/// mean/max are the policy return and whose update norm is zero.
pub fn train<O: Objective + ?Sized>(
    objective: &O,
    init: &ParamVector,
    cfg: &ArsConfig,
    opts: &TrainOptions,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mask = opts.mask.as_deref();
    if let Some(m) = mask {
        if m.len() != init.len() {
            return Err(Error::dim("ars mask", init.len(), m.len()));
        }
    }
    let mut normalizer = match cfg.version {
        ArsVersion::V1 => None,
        ArsVersion::V2 => {
            let dim = objective
                .observation_dim()
                .ok_or_else(|| Error::Config("objective does not support observation normalization (V2)".into()))?;
            let n = opts.normalizer.clone().unwrap_or_else(|| Normalizer::new(dim));
            if n.dim() != dim {
                return Err(Error::dim("ars normalizer", dim, n.dim()));
            }
            Some(n)
        }
    };

    let pool = thread_pool(cfg.workers)?;
    let start = Instant::now();
    let elapsed = |start: &Instant| {
        if opts.record_wall_time {
            start.elapsed().as_secs_f64()
        } else {
            0.0
        }
    };
    let mut theta = init.clone();
    let mut records = Vec::with_capacity(cfg.iterations);
    let mut solved_at = None;

    for iteration in 0..cfg.iterations {
        let ctx = EvalContext {
            seed: rng::policy_eval_seed(cfg.master_seed, iteration as u64),
            normalizer: normalizer.as_ref(),
            collect_stats: false,
        };
        let policy_return = objective.evaluate(&theta, &ctx)?.total_return;
        if opts.stop_at.is_some_and(|target| policy_return >= target) {
            records.push(IterationRecord {
                iteration,
                mean_return: policy_return,
                max_return: policy_return,
                update_norm: 0.0,
                wall_time: elapsed(&start),
                policy_return,
            });
            solved_at = Some(iteration);
            break;
        }

        let batch = evaluate_batch(&pool, &theta, objective, cfg, iteration, mask, normalizer.as_ref())?;
        let next = ars_update_masked(&theta, &batch.evals, cfg, mask)?;

        let returns: Vec<f64> = batch.evals.iter().flat_map(|e| [e.r_plus, e.r_minus]).collect();
        let mean_return = returns.iter().sum::<f64>() / returns.len() as f64;
        let max_return = returns.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let update_norm = next
            .values()
            .iter()
            .zip(theta.values())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let record = IterationRecord {
            iteration,
            mean_return,
            max_return,
            update_norm,
            wall_time: elapsed(&start),
            policy_return,
        };
        log::debug!(
            "iter {iteration}: policy {policy_return:.4} mean {mean_return:.4} max {max_return:.4} |step| {update_norm:.3e}"
        );
        records.push(record);
        theta = next;
        if let (Some(n), Some(s)) = (normalizer.as_mut(), batch.stats.as_ref()) {
            n.merge(s)?;
        }
    }

    Ok(TrainOutcome {
        params: theta,
        records,
        solved_at,
        normalizer,
    })
}
