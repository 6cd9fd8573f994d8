//! Hand-designed reward for pre-training the expert steering low level.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::ars::rng::{derive_seed, rng_from_seed};
use crate::ars::Normalizer;
use crate::error::{Error, Result};
use crate::hrl::{HrlPolicy, RolloutOptions, FULL_OBS_DIM};
use crate::sim::{Env, EnvConfig, Task, HIGH_OBS_DIM};

/// How the steering reward treats negative commands.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SteerRewardMode {
    /// `min(l, s)` for `l >= 0`, `min(-l, -s)` for `l < 0`.
    Symmetric,
    /// `min(l, |s|)` for every `l`.
    Literal,
}

impl SteerRewardMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            SteerRewardMode::Symmetric => "symmetric",
            SteerRewardMode::Literal => "literal",
        }
    }
}

impl fmt::Display for SteerRewardMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SteerRewardMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "symmetric" => Ok(SteerRewardMode::Symmetric),
            "literal" => Ok(SteerRewardMode::Literal),
            other => Err(Error::Config(format!("unknown steer reward mode '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExpertRewardConfig {
    /// Trailing window for the steering estimate, ticks.
    pub window: usize,
    /// Weight of the forward term.
    pub forward_weight: f64,
    /// Cap on forward progress rewarded per tick, m.
    pub forward_cap: f64,
    /// Yaw rate (rad/s) that maps to a steering value of 1.
    pub steer_scale: f64,
    pub mode: SteerRewardMode,
    /// Ticks per pre-training episode.
    pub episode_steps: usize,
    /// Episodes averaged per evaluation, with commands stratified over [-1, 1].
    pub episodes_per_eval: usize,
}

impl Default for ExpertRewardConfig {
    fn default() -> Self {
        ExpertRewardConfig {
            window: 50,
            forward_weight: 0.5,
            forward_cap: 0.005,
            steer_scale: 1.0,
            mode: SteerRewardMode::Symmetric,
            episode_steps: 1000,
            episodes_per_eval: 4,
        }
    }
}

impl ExpertRewardConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::Config("expert window must be at least 1".into()));
        }
        if !(self.forward_weight >= 0.0 && self.forward_weight.is_finite()) {
            return Err(Error::Config("expert forward_weight must be non-negative".into()));
        }
        if !(self.forward_cap > 0.0 && self.forward_cap.is_finite()) {
            return Err(Error::Config("expert forward_cap must be positive".into()));
        }
        if !(self.steer_scale > 0.0 && self.steer_scale.is_finite()) {
            return Err(Error::Config("expert steer_scale must be positive".into()));
        }
        if self.episode_steps == 0 || self.episodes_per_eval == 0 {
            return Err(Error::Config(
                "expert episode_steps and episodes_per_eval must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Steering reward, capped by the command.
pub fn steer_reward(command: f64, steer: f64, mode: SteerRewardMode) -> f64 {
    match mode {
        SteerRewardMode::Symmetric if command >= 0.0 => command.min(steer),
        SteerRewardMode::Symmetric => (-command).min(-steer),
        SteerRewardMode::Literal => command.min(steer.abs()),
    }
}

/// Forward progress reward, capped.
pub fn forward_reward(progress: f64, cap: f64) -> f64 {
    cap.min(progress)
}

/// Trailing mean of the yaw rate, expressed as a steering value in [-1, 1]
/// with positive meaning a right (clockwise) turn.
#[derive(Clone, Debug)]
pub struct SteerWindow {
    rates: VecDeque<f64>,
    window: usize,
    scale: f64,
}

impl SteerWindow {
    pub fn new(window: usize, steer_scale: f64) -> Self {
        SteerWindow {
            rates: VecDeque::with_capacity(window),
            window,
            scale: steer_scale,
        }
    }

    pub fn push(&mut self, yaw_rate: f64) -> f64 {
        if self.rates.len() == self.window {
            self.rates.pop_front();
        }
        self.rates.push_back(yaw_rate);
        self.value()
    }

    pub fn value(&self) -> f64 {
        if self.rates.is_empty() {
            return 0.0;
        }
        let mean = self.rates.iter().sum::<f64>() / self.rates.len() as f64;
        (-mean / self.scale).clamp(-1.0, 1.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExpertStep {
    pub steer: f64,
    pub r_steer: f64,
    pub r_fw: f64,
    pub reward: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExpertEpisode {
    pub command: f64,
    pub total_return: f64,
    pub steps: Vec<ExpertStep>,
    pub stats: Option<Normalizer>,
}

/// One open-arena episode of the steering low level under a fixed command.
pub fn expert_episode(
    policy: &HrlPolicy,
    command: f64,
    reward: &ExpertRewardConfig,
    env_cfg: &EnvConfig,
    opts: &RolloutOptions<'_>,
) -> Result<ExpertEpisode> {
    if policy.latent_dim() != 1 {
        return Err(Error::dim("expert command", 1, policy.latent_dim()));
    }
    let mut cfg = env_cfg.clone();
    cfg.max_steps = reward.episode_steps;
    let mut env = Env::new(Task::OpenArena, cfg, opts.seed)?;
    let mut window = SteerWindow::new(reward.window, reward.steer_scale);
    let mut stats = opts.collect_stats.then(|| Normalizer::new(FULL_OBS_DIM));
    let mut obs = [0.0; FULL_OBS_DIM];
    let mut steps = Vec::new();
    let mut total = 0.0;
    let latent = [command.clamp(-1.0, 1.0)];
    while !env.is_done() {
        let last = env.last();
        obs[..HIGH_OBS_DIM].copy_from_slice(&last.observation_high);
        obs[HIGH_OBS_DIM..].copy_from_slice(&last.observation_low);
        if let Some(s) = stats.as_mut() {
            s.update(&obs)?;
        }
        if let Some(n) = opts.normalizer {
            n.apply_in_place(&mut obs)?;
        }
        let before = env.state().clone();
        let action = policy.low_level_step(&obs[HIGH_OBS_DIM..], &latent)?;
        env.apply(&action)?;
        let after = env.state();
        let (s, c) = before.yaw.sin_cos();
        let progress = (after.position[0] - before.position[0]) * c + (after.position[1] - before.position[1]) * s;
        let steer = window.push(after.yaw_rate);
        let r_steer = steer_reward(latent[0], steer, reward.mode);
        let r_fw = forward_reward(progress, reward.forward_cap);
        let r = r_steer + reward.forward_weight * r_fw;
        total += r;
        if opts.record_steps {
            steps.push(ExpertStep {
                steer,
                r_steer,
                r_fw,
                reward: r,
            });
        }
    }
    Ok(ExpertEpisode {
        command: latent[0],
        total_return: total,
        steps,
        stats,
    })
}

/// Commands for one evaluation: one uniform draw inside each of
/// `count` equal strata of [-1, 1].
pub fn stratified_commands(seed: u64, count: usize) -> Vec<f64> {
    let mut rng = rng_from_seed(derive_seed(&[seed, 0x0063_6f6d_6d61_6e64]));
    (0..count)
        .map(|k| -1.0 + 2.0 * (k as f64 + rng.random::<f64>()) / count as f64)
        .collect()
}
