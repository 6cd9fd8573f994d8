//! Hierarchical policy execution.
//!
//! The high level sees `(x, y, cos yaw, sin yaw)` and emits a latent
//! command plus a duration in low-level ticks. The low level sees the
//! generator phases and IMU together with the latent command, and drives
//! the trajectory generators every tick. The high level is consulted
//! again only when the duration has run out.

use crate::ars::Normalizer;
use crate::error::{Error, Result};
use crate::linear_policy::{clip_unit_in_place, flatten, unflatten_values, Layout, LinearMap, MapShape, ParamVector};
use crate::pmtg::{PmtgAction, ACTION_DIM};
use crate::sim::{Env, EnvConfig, Point, Task, TerminationReason, HIGH_OBS_DIM, LOW_OBS_DIM};

pub const MIN_DURATION: u32 = 100;
pub const MAX_DURATION: u32 = 700;
/// Width of the concatenated `(o_h, o_l)` observation.
pub const FULL_OBS_DIM: usize = HIGH_OBS_DIM + LOW_OBS_DIM;

/// Maps a clipped value in `[-1, 1]` to an integer duration in `[100, 700]`,
/// rounding half up.
pub fn duration_rescale(u: f64) -> u32 {
    let u = u.clamp(-1.0, 1.0);
    let mid = f64::from(MIN_DURATION + MAX_DURATION) / 2.0;
    let half = f64::from(MAX_DURATION - MIN_DURATION) / 2.0;
    ((mid + half * u + 0.5).floor() as u32).clamp(MIN_DURATION, MAX_DURATION)
}

#[derive(Clone, Debug, PartialEq)]
pub struct HighLevelOutput {
    pub latent: Vec<f64>,
    pub duration: u32,
}

/// Two linear maps joined by a clipped latent command.
#[derive(Clone, Debug, PartialEq)]
pub struct HrlPolicy {
    high: LinearMap,
    low: LinearMap,
    latent_dim: usize,
}

impl HrlPolicy {
    /// Flat layout: high map `(latent_dim + 1) x 4`, then low map `16 x (12 + latent_dim)`.
    pub fn layout(latent_dim: usize) -> Layout {
        Layout::new(vec![
            MapShape::new(latent_dim + 1, HIGH_OBS_DIM),
            MapShape::new(ACTION_DIM, LOW_OBS_DIM + latent_dim),
        ])
        .expect("two maps")
    }

    pub fn zeros(latent_dim: usize) -> Result<Self> {
        if latent_dim == 0 {
            return Err(Error::Config("latent_dim must be at least 1".into()));
        }
        Ok(Self::zeros_unchecked(latent_dim))
    }

    /// Also accepts `latent_dim == 0`, which reduces the policy to a flat
    /// low level driven only by on-board observations.
    #[doc(hidden)]
    pub fn zeros_unchecked(latent_dim: usize) -> Self {
        HrlPolicy {
            high: LinearMap::zeros(latent_dim + 1, HIGH_OBS_DIM),
            low: LinearMap::zeros(ACTION_DIM, LOW_OBS_DIM + latent_dim),
            latent_dim,
        }
    }

    pub fn from_maps(high: LinearMap, low: LinearMap) -> Result<Self> {
        if high.cols() != HIGH_OBS_DIM {
            return Err(Error::dim("high-level input", HIGH_OBS_DIM, high.cols()));
        }
        if high.rows() < 1 {
            return Err(Error::dim("high-level output", 1, 0));
        }
        let latent_dim = high.rows() - 1;
        if low.cols() != LOW_OBS_DIM + latent_dim {
            return Err(Error::dim("low-level input", LOW_OBS_DIM + latent_dim, low.cols()));
        }
        if low.rows() != ACTION_DIM {
            return Err(Error::dim("low-level output", ACTION_DIM, low.rows()));
        }
        Ok(HrlPolicy { high, low, latent_dim })
    }

    pub fn from_params(params: &[f64], latent_dim: usize) -> Result<Self> {
        let mut maps = unflatten_values(params, &Self::layout(latent_dim))?;
        let low = maps.pop().expect("two maps");
        let high = maps.pop().expect("two maps");
        Self::from_maps(high, low)
    }

    pub fn to_params(&self) -> ParamVector {
        flatten(&[self.high.clone(), self.low.clone()]).expect("two maps")
    }

    pub fn high(&self) -> &LinearMap {
        &self.high
    }

    pub fn low(&self) -> &LinearMap {
        &self.low
    }

    pub fn high_mut(&mut self) -> &mut LinearMap {
        &mut self.high
    }

    pub fn low_mut(&mut self) -> &mut LinearMap {
        &mut self.low
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    /// Latent command (clipped) and duration from the high-level observation.
    pub fn high_level_step(&self, o_h: &[f64]) -> Result<HighLevelOutput> {
        let mut raw = vec![0.0; self.latent_dim + 1];
        self.high.forward_split(o_h, &[], &mut raw)?;
        let duration = duration_rescale(raw[self.latent_dim].clamp(-1.0, 1.0));
        raw.truncate(self.latent_dim);
        clip_unit_in_place(&mut raw);
        Ok(HighLevelOutput { latent: raw, duration })
    }

    /// Generator modulation and motor residuals for one tick.
    pub fn low_level_step(&self, o_l: &[f64], latent: &[f64]) -> Result<PmtgAction> {
        if latent.len() != self.latent_dim {
            return Err(Error::dim("latent command", self.latent_dim, latent.len()));
        }
        if o_l.len() != LOW_OBS_DIM {
            return Err(Error::dim("low-level observation", LOW_OBS_DIM, o_l.len()));
        }
        let mut raw = [0.0; ACTION_DIM];
        self.low.forward_split(o_l, latent, &mut raw)?;
        PmtgAction::from_raw(&raw)
    }
}

/// Baseline whose high level emits a scalar steering command in `[-1, 1]`
/// to a separately pre-trained low level. Structurally a one-dimensional
/// latent policy.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpertPolicy(HrlPolicy);

impl ExpertPolicy {
    pub fn from_maps(expert_high: LinearMap, expert_low: LinearMap) -> Result<Self> {
        if expert_high.rows() != 2 {
            return Err(Error::dim("expert high-level output", 2, expert_high.rows()));
        }
        Ok(ExpertPolicy(HrlPolicy::from_maps(expert_high, expert_low)?))
    }

    pub fn layout() -> Layout {
        HrlPolicy::layout(1)
    }

    pub fn inner(&self) -> &HrlPolicy {
        &self.0
    }
}

/// Flat baseline: one 16 -> 16 map on `(o_h, o_l)` every tick.
#[derive(Clone, Debug, PartialEq)]
pub struct FlatPolicy(LinearMap);

impl FlatPolicy {
    pub fn new(map: LinearMap) -> Result<Self> {
        if map.cols() != FULL_OBS_DIM {
            return Err(Error::dim("flat policy input", FULL_OBS_DIM, map.cols()));
        }
        if map.rows() != ACTION_DIM {
            return Err(Error::dim("flat policy output", ACTION_DIM, map.rows()));
        }
        Ok(FlatPolicy(map))
    }

    pub fn layout() -> Layout {
        Layout::new(vec![MapShape::new(ACTION_DIM, FULL_OBS_DIM)]).expect("one map")
    }

    pub fn map(&self) -> &LinearMap {
        &self.0
    }

    pub fn act(&self, o_h: &[f64], o_l: &[f64]) -> Result<PmtgAction> {
        let mut raw = [0.0; ACTION_DIM];
        self.0.forward_split(o_h, o_l, &mut raw)?;
        PmtgAction::from_raw(&raw)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    /// Tick index, starting at 0.
    pub step: usize,
    /// Simulated time at the end of the tick, s.
    pub time: f64,
    pub position: Point,
    pub yaw: f64,
    pub reward: f64,
    /// Whether the high level decided right before this tick.
    pub decision: bool,
    pub latent: Vec<f64>,
    /// Ticks left on the current command after this tick.
    pub duration_remaining: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecisionRecord {
    pub step: usize,
    pub latent: Vec<f64>,
    pub duration: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeLog {
    /// Per-tick records; empty unless recording was requested.
    pub steps: Vec<StepRecord>,
    pub decisions: Vec<DecisionRecord>,
    pub total_return: f64,
    pub num_steps: usize,
    pub start: Point,
    pub end: Point,
    pub termination: TerminationReason,
    /// Raw-observation statistics, when collection was requested.
    pub stats: Option<Normalizer>,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct RolloutOptions<'a> {
    /// Seeds the IMU noise stream.
    pub seed: u64,
    pub record_steps: bool,
    pub normalizer: Option<&'a Normalizer>,
    pub collect_stats: bool,
}

/// Shared bookkeeping for every policy type.
struct Runner<'a> {
    env: Env,
    opts: RolloutOptions<'a>,
    obs: [f64; FULL_OBS_DIM],
    log: EpisodeLog,
    pending_decision: bool,
}

impl<'a> Runner<'a> {
    fn new(task: &Task, cfg: &EnvConfig, opts: &RolloutOptions<'a>) -> Result<Self> {
        if let Some(n) = opts.normalizer {
            if n.dim() != FULL_OBS_DIM {
                return Err(Error::dim("observation normalizer", FULL_OBS_DIM, n.dim()));
            }
        }
        let env = Env::new(task.clone(), cfg.clone(), opts.seed)?;
        let start = env.state().position;
        let mut runner = Runner {
            env,
            opts: *opts,
            obs: [0.0; FULL_OBS_DIM],
            log: EpisodeLog {
                steps: Vec::new(),
                decisions: Vec::new(),
                total_return: 0.0,
                num_steps: 0,
                start,
                end: start,
                termination: TerminationReason::Running,
                stats: opts.collect_stats.then(|| Normalizer::new(FULL_OBS_DIM)),
            },
            pending_decision: false,
        };
        runner.refresh_obs()?;
        Ok(runner)
    }

    fn refresh_obs(&mut self) -> Result<()> {
        let last = self.env.last();
        self.obs[..HIGH_OBS_DIM].copy_from_slice(&last.observation_high);
        self.obs[HIGH_OBS_DIM..].copy_from_slice(&last.observation_low);
        if let Some(stats) = self.log.stats.as_mut() {
            stats.update(&self.obs)?;
        }
        if let Some(n) = self.opts.normalizer {
            n.apply_in_place(&mut self.obs)?;
        }
        Ok(())
    }

    fn high_obs(&self) -> &[f64] {
        &self.obs[..HIGH_OBS_DIM]
    }

    fn low_obs(&self) -> &[f64] {
        &self.obs[HIGH_OBS_DIM..]
    }

    fn done(&self) -> bool {
        self.env.is_done()
    }

    fn decide(&mut self, latent: &[f64], duration: u32) {
        self.log.decisions.push(DecisionRecord {
            step: self.log.num_steps,
            latent: latent.to_vec(),
            duration,
        });
        self.pending_decision = true;
    }

    fn step(&mut self, action: &PmtgAction, latent: &[f64], duration_remaining: u32) -> Result<()> {
        let result = self.env.apply(action)?;
        let reward = result.reward;
        self.log.total_return += reward;
        self.log.termination = result.reason;
        let step = self.log.num_steps;
        self.log.num_steps += 1;
        if self.opts.record_steps {
            let s = self.env.state();
            self.log.steps.push(StepRecord {
                step,
                time: s.step_count as f64 * self.env.config().dt,
                position: s.position,
                yaw: s.yaw,
                reward,
                decision: self.pending_decision,
                latent: latent.to_vec(),
                duration_remaining,
            });
        }
        self.pending_decision = false;
        self.refresh_obs()
    }

    fn finish(mut self) -> EpisodeLog {
        self.log.end = self.env.state().position;
        self.log
    }
}

/// Executes a hierarchical policy until the environment terminates.
///
/// The duration counter starts at zero, so the first high-level decision
/// happens before the first tick. A fresh high-level observation is read
/// only when the counter reaches zero; termination mid-duration discards
/// the remainder.
pub fn run_episode(policy: &HrlPolicy, task: &Task, cfg: &EnvConfig, opts: &RolloutOptions<'_>) -> Result<EpisodeLog> {
    let mut runner = Runner::new(task, cfg, opts)?;
    let mut remaining = 0u32;
    let mut latent = vec![0.0; policy.latent_dim()];
    while !runner.done() {
        if remaining == 0 {
            let out = policy.high_level_step(runner.high_obs())?;
            latent = out.latent;
            remaining = out.duration;
            runner.decide(&latent, remaining);
        }
        let action = policy.low_level_step(runner.low_obs(), &latent)?;
        remaining -= 1;
        runner.step(&action, &latent, remaining)?;
    }
    Ok(runner.finish())
}

/// Executes the flat baseline: `(o_h, o_l)` to action every tick.
pub fn run_flat_episode(
    flat: &FlatPolicy,
    task: &Task,
    cfg: &EnvConfig,
    opts: &RolloutOptions<'_>,
) -> Result<EpisodeLog> {
    let mut runner = Runner::new(task, cfg, opts)?;
    while !runner.done() {
        let action = flat.act(runner.high_obs(), runner.low_obs())?;
        runner.step(&action, &[], 0)?;
    }
    Ok(runner.finish())
}

/// Executes the expert baseline with the same schedule as [`run_episode`].
pub fn run_expert_episode(
    expert: &ExpertPolicy,
    task: &Task,
    cfg: &EnvConfig,
    opts: &RolloutOptions<'_>,
) -> Result<EpisodeLog> {
    run_episode(expert.inner(), task, cfg, opts)
}

/// Runs only the low level with a fixed command for up to `steps` ticks.
pub fn run_low_level_fixed(
    policy: &HrlPolicy,
    latent: &[f64],
    task: &Task,
    cfg: &EnvConfig,
    steps: usize,
    opts: &RolloutOptions<'_>,
) -> Result<EpisodeLog> {
    let mut runner = Runner::new(task, cfg, opts)?;
    runner.decide(latent, 0);
    while !runner.done() && runner.log.num_steps < steps {
        let action = policy.low_level_step(runner.low_obs(), latent)?;
        runner.step(&action, latent, 0)?;
    }
    Ok(runner.finish())
}
