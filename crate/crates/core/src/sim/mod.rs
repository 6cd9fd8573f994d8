//! Planar quadruped steering surrogate.
//!
//! Stance legs propel the body in proportion to their rearward swing rate;
//! a left/right imbalance in propulsion yaws the body. Speed and yaw rate
//! follow their commands through first-order lags, the pose is integrated
//! with explicit Euler, and roll/pitch are damped oscillators driven by
//! the extension commands.

pub mod path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::pmtg::{
    compose_action, pmtg_observe, tg_foot_targets, tg_step, MotorCommand, PmtgAction, TgConfig, TgState, LEFT_LEGS,
    NUM_LEGS, RIGHT_LEGS, TG_OBS_DIM,
};
pub use path::{builtin_path_text, distance, load_path, path_lateral_distance, Path, Point, BUILTIN_PATHS};

pub const HIGH_OBS_DIM: usize = 4;
pub const IMU_DIM: usize = 4;
pub const LOW_OBS_DIM: usize = TG_OBS_DIM + IMU_DIM;

#[derive(Clone, Debug, PartialEq)]
pub struct AttitudeConfig {
    /// Natural frequency of the roll/pitch oscillators, rad/s.
    pub natural_frequency: f64,
    pub damping_ratio: f64,
    /// rad of pitch per m of mean extension offset.
    pub pitch_gain: f64,
    /// rad of roll per m of left-minus-right extension.
    pub roll_gain: f64,
}

impl Default for AttitudeConfig {
    fn default() -> Self {
        AttitudeConfig {
            natural_frequency: 20.0,
            damping_ratio: 0.3,
            pitch_gain: 2.0,
            roll_gain: 2.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvConfig {
    /// Control period, s.
    pub dt: f64,
    pub max_steps: usize,
    pub k_v: f64,
    pub k_omega: f64,
    /// m.
    pub track_width: f64,
    /// m.
    pub leg_length: f64,
    /// s.
    pub tau_v: f64,
    /// s.
    pub tau_omega: f64,
    pub attitude: AttitudeConfig,
    /// Standard deviation of additive Gaussian noise on each IMU channel.
    pub imu_noise_std: f64,
    /// Episode ends with `GoalReached` within this radius of the goal; 0 disables.
    pub goal_radius: f64,
    pub tg: TgConfig,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            dt: 0.006,
            max_steps: 10_000,
            k_v: 1.0,
            k_omega: 2.0,
            track_width: 0.2,
            leg_length: 0.2,
            tau_v: 0.15,
            tau_omega: 0.1,
            attitude: AttitudeConfig::default(),
            imu_noise_std: 0.0,
            goal_radius: 0.0,
            tg: TgConfig::default(),
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("env dt", self.dt),
            ("env tau_v", self.tau_v),
            ("env tau_omega", self.tau_omega),
            ("env track_width", self.track_width),
            ("env leg_length", self.leg_length),
            ("env natural_frequency", self.attitude.natural_frequency),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.max_steps == 0 {
            return Err(Error::Config("env max_steps must be positive".into()));
        }
        let non_negative = [
            ("env imu_noise_std", self.imu_noise_std),
            ("env goal_radius", self.goal_radius),
            ("env damping_ratio", self.attitude.damping_ratio),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be non-negative, got {v}")));
            }
        }
        for (name, v) in [
            ("env k_v", self.k_v),
            ("env k_omega", self.k_omega),
            ("env pitch_gain", self.attitude.pitch_gain),
            ("env roll_gain", self.attitude.roll_gain),
        ] {
            if !v.is_finite() {
                return Err(Error::Config(format!("{name} must be finite")));
            }
        }
        self.tg.validate()
    }

    /// Upper bound on |body speed| given the actuator limits.
    pub fn speed_bound(&self) -> f64 {
        self.k_v.abs() * self.leg_length * self.tg.max_swing_rate(self.dt)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Attitude {
    pub roll: f64,
    pub pitch: f64,
    pub roll_rate: f64,
    pub pitch_rate: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TerminationReason {
    Running,
    OutOfPath,
    GoalReached,
    TimeLimit,
}

impl TerminationReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            TerminationReason::Running => "running",
            TerminationReason::OutOfPath => "out_of_path",
            TerminationReason::GoalReached => "goal_reached",
            TerminationReason::TimeLimit => "time_limit",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RobotState {
    pub position: Point,
    /// Wrapped to (-pi, pi].
    pub yaw: f64,
    pub body_speed: f64,
    pub yaw_rate: f64,
    pub attitude: Attitude,
    pub tg: TgState,
    pub prev_motor: MotorCommand,
    pub step_count: usize,
    pub terminated: bool,
}

impl RobotState {
    /// Reflection across the x axis with left and right legs exchanged.
    pub fn mirrored(&self) -> Self {
        RobotState {
            position: [self.position[0], -self.position[1]],
            yaw: wrap_angle(-self.yaw),
            body_speed: self.body_speed,
            yaw_rate: -self.yaw_rate,
            attitude: Attitude {
                roll: -self.attitude.roll,
                pitch: self.attitude.pitch,
                roll_rate: -self.attitude.roll_rate,
                pitch_rate: self.attitude.pitch_rate,
            },
            tg: self.tg.mirrored(),
            prev_motor: self.prev_motor.mirrored(),
            step_count: self.step_count,
            terminated: self.terminated,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    /// 8 PMTG phase features then roll, pitch, roll rate, pitch rate.
    pub observation_low: [f64; LOW_OBS_DIM],
    /// x, y, cos yaw, sin yaw.
    pub observation_high: [f64; HIGH_OBS_DIM],
    pub reward: f64,
    pub terminated: bool,
    pub reason: TerminationReason,
}

/// Where the robot walks: a corridor with a goal, or an unbounded arena
/// with no reward and no out-of-path termination.
#[derive(Clone, Debug, PartialEq)]
pub enum Task {
    Corridor(Path),
    OpenArena,
}

impl Task {
    pub fn path(&self) -> Option<&Path> {
        match self {
            Task::Corridor(p) => Some(p),
            Task::OpenArena => None,
        }
    }
}

/// Wraps an angle to (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let mut w = (a + PI).rem_euclid(TAU) - PI;
    if w <= -PI {
        w += TAU;
    }
    w
}

/// Progress toward the goal between two positions.
pub fn reward_step(prev_pos: Point, pos: Point, goal: Point) -> f64 {
    distance(prev_pos, goal) - distance(pos, goal)
}

fn initial_state(task: &Task, cfg: &EnvConfig) -> RobotState {
    let (position, yaw) = match task {
        Task::Corridor(p) => (p.start(), wrap_angle(p.initial_heading())),
        Task::OpenArena => ([0.0, 0.0], 0.0),
    };
    let tg = TgState::trot(&cfg.tg);
    let prev_motor = tg_foot_targets(&tg, &cfg.tg);
    RobotState {
        position,
        yaw,
        body_speed: 0.0,
        yaw_rate: 0.0,
        attitude: Attitude::default(),
        tg,
        prev_motor,
        step_count: 0,
        terminated: false,
    }
}

fn observe(state: &RobotState, reward: f64, reason: TerminationReason, imu_noise: [f64; IMU_DIM]) -> StepResult {
    let mut low = [0.0; LOW_OBS_DIM];
    low[..TG_OBS_DIM].copy_from_slice(&pmtg_observe(&state.tg));
    let a = &state.attitude;
    let imu = [a.roll, a.pitch, a.roll_rate, a.pitch_rate];
    for k in 0..IMU_DIM {
        low[TG_OBS_DIM + k] = imu[k] + imu_noise[k];
    }
    let (s, c) = state.yaw.sin_cos();
    StepResult {
        observation_low: low,
        observation_high: [state.position[0], state.position[1], c, s],
        reward,
        terminated: reason != TerminationReason::Running,
        reason,
    }
}

/// Episode start: first waypoint, facing along the first segment, at rest.
pub fn env_reset(task: &Task, cfg: &EnvConfig) -> Result<(RobotState, StepResult)> {
    cfg.validate()?;
    let state = initial_state(task, cfg);
    let obs = observe(&state, 0.0, TerminationReason::Running, [0.0; IMU_DIM]);
    Ok((state, obs))
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Advances body motion one control period under `motors`.
///
/// `state.tg` must already hold the generator state the motors were
/// computed from; it decides which legs are in stance.
pub fn step_dynamics(state: &RobotState, motors: &MotorCommand, cfg: &EnvConfig) -> RobotState {
    let dt = cfg.dt;
    let mut propulsion = [0.0; NUM_LEGS];
    let mut stance = [false; NUM_LEGS];
    for leg in 0..NUM_LEGS {
        let swing_rate = (motors.swing[leg] - state.prev_motor.swing[leg]) / dt;
        propulsion[leg] = -swing_rate * cfg.leg_length;
        stance[leg] = state.tg.in_stance(leg);
    }
    let side_mean = |legs: &[usize]| mean(legs.iter().filter(|&&l| stance[l]).map(|&l| propulsion[l]));

    let v_cmd = cfg.k_v * mean((0..NUM_LEGS).filter(|&l| stance[l]).map(|l| propulsion[l])).unwrap_or(0.0);
    let omega_cmd = match (side_mean(&RIGHT_LEGS), side_mean(&LEFT_LEGS)) {
        (Some(r), Some(l)) => cfg.k_omega * (r - l) / cfg.track_width,
        _ => 0.0,
    };

    let mut next = state.clone();
    next.body_speed += (v_cmd - state.body_speed) * dt / cfg.tau_v;
    next.yaw_rate += (omega_cmd - state.yaw_rate) * dt / cfg.tau_omega;
    let (s, c) = state.yaw.sin_cos();
    next.position[0] += next.body_speed * c * dt;
    next.position[1] += next.body_speed * s * dt;
    next.yaw = wrap_angle(state.yaw + next.yaw_rate * dt);

    let att = &cfg.attitude;
    let center = cfg.tg.extension_center;
    let mean_ext = motors.extension.iter().sum::<f64>() / NUM_LEGS as f64;
    let left_ext = (motors.extension[LEFT_LEGS[0]] + motors.extension[LEFT_LEGS[1]]) / 2.0;
    let right_ext = (motors.extension[RIGHT_LEGS[0]] + motors.extension[RIGHT_LEGS[1]]) / 2.0;
    let pitch_target = att.pitch_gain * (mean_ext - center);
    let roll_target = att.roll_gain * (left_ext - right_ext);
    let wn = att.natural_frequency;
    let oscillate = |angle: f64, rate: f64, target: f64| {
        let acc = wn * wn * (target - angle) - 2.0 * att.damping_ratio * wn * rate;
        let rate = rate + acc * dt;
        (angle + rate * dt, rate)
    };
    let a = &state.attitude;
    let (pitch, pitch_rate) = oscillate(a.pitch, a.pitch_rate, pitch_target);
    let (roll, roll_rate) = oscillate(a.roll, a.roll_rate, roll_target);
    next.attitude = Attitude {
        roll,
        pitch,
        roll_rate,
        pitch_rate,
    };
    next.prev_motor = motors.clone();
    next
}

/// Dynamics, reward, observations and termination for one control period.
pub fn env_step(
    state: &RobotState,
    motors: &MotorCommand,
    task: &Task,
    cfg: &EnvConfig,
    imu_noise: [f64; IMU_DIM],
) -> Result<(RobotState, StepResult)> {
    if state.terminated {
        return Err(Error::EpisodeTerminated);
    }
    let mut next = step_dynamics(state, motors, cfg);
    next.step_count += 1;
    let (reward, reason) = match task {
        Task::Corridor(path) => {
            let goal = path.goal();
            let reward = reward_step(state.position, next.position, goal);
            let (_, inside) = path_lateral_distance(next.position, path);
            let reason = if !inside {
                TerminationReason::OutOfPath
            } else if cfg.goal_radius > 0.0 && distance(next.position, goal) <= cfg.goal_radius {
                TerminationReason::GoalReached
            } else if next.step_count >= cfg.max_steps {
                TerminationReason::TimeLimit
            } else {
                TerminationReason::Running
            };
            (reward, reason)
        }
        Task::OpenArena => {
            let reason = if next.step_count >= cfg.max_steps {
                TerminationReason::TimeLimit
            } else {
                TerminationReason::Running
            };
            (0.0, reason)
        }
    };
    next.terminated = reason != TerminationReason::Running;
    let result = observe(&next, reward, reason, imu_noise);
    Ok((next, result))
}

/// One simulated robot: owns its state and its IMU noise stream.
#[derive(Clone, Debug)]
pub struct Env {
    task: Task,
    cfg: EnvConfig,
    state: RobotState,
    last: StepResult,
    noise: Option<(ChaCha8Rng, Normal<f64>)>,
}

impl Env {
    pub fn new(task: Task, cfg: EnvConfig, seed: u64) -> Result<Self> {
        let (state, last) = env_reset(&task, &cfg)?;
        let noise = if cfg.imu_noise_std > 0.0 {
            let normal = Normal::new(0.0, cfg.imu_noise_std).map_err(|e| Error::Config(e.to_string()))?;
            Some((ChaCha8Rng::seed_from_u64(seed), normal))
        } else {
            None
        };
        Ok(Env {
            task,
            cfg,
            state,
            last,
            noise,
        })
    }

    /// Starts from an arbitrary state instead of the reset pose.
    pub fn from_state(task: Task, cfg: EnvConfig, state: RobotState, seed: u64) -> Result<Self> {
        let mut env = Env::new(task, cfg, seed)?;
        env.last = observe(&state, 0.0, TerminationReason::Running, [0.0; IMU_DIM]);
        env.state = state;
        Ok(env)
    }

    pub fn state(&self) -> &RobotState {
        &self.state
    }

    pub fn last(&self) -> &StepResult {
        &self.last
    }

    pub fn task(&self) -> &Task {
        &self.task
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn is_done(&self) -> bool {
        self.state.terminated
    }

    /// Steps with motor commands computed outside; the generator is not advanced.
    pub fn step_motors(&mut self, motors: &MotorCommand) -> Result<&StepResult> {
        let noise = self.sample_noise();
        let (next, result) = env_step(&self.state, motors, &self.task, &self.cfg, noise)?;
        self.state = next;
        self.last = result;
        Ok(&self.last)
    }

    /// Advances the generators with the action's modulation, adds its
    /// residuals, and steps the body.
    pub fn apply(&mut self, action: &PmtgAction) -> Result<&StepResult> {
        if self.state.terminated {
            return Err(Error::EpisodeTerminated);
        }
        let tg = tg_step(&self.state.tg, &action.modulation, &self.cfg.tg, self.cfg.dt)?;
        let targets = tg_foot_targets(&tg, &self.cfg.tg);
        let motors = compose_action(&targets, &action.residuals, &self.cfg.tg);
        self.state.tg = tg;
        self.step_motors(&motors)
    }

    fn sample_noise(&mut self) -> [f64; IMU_DIM] {
        let mut out = [0.0; IMU_DIM];
        if let Some((rng, normal)) = &mut self.noise {
            for v in &mut out {
                *v = normal.sample(rng);
            }
        }
        out
    }
}
