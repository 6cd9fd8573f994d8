//! Per-leg cyclic trajectory generators modulated by the policy.
//!
//! Legs are indexed front-left, front-right, rear-left, rear-right. Swing
//! angles are positive toward the front of the robot, so a forward-walking
//! gait sweeps the foot rearward during stance; this is why the default
//! swing amplitude is negative.

use std::f64::consts::{PI, TAU};

use crate::error::{Error, Result};

pub const NUM_LEGS: usize = 4;
pub const LEFT_LEGS: [usize; 2] = [0, 2];
pub const RIGHT_LEGS: [usize; 2] = [1, 3];
/// Leg permutation that exchanges left and right.
pub const MIRROR_LEGS: [usize; NUM_LEGS] = [1, 0, 3, 2];

/// Dimension of the PMTG part of the low-level observation.
pub const TG_OBS_DIM: usize = 2 * NUM_LEGS;
/// Policy action: 8 generator modulations followed by 8 motor residuals.
pub const ACTION_DIM: usize = 4 * NUM_LEGS;

#[derive(Clone, Debug, PartialEq)]
pub struct TgConfig {
    /// Hz.
    pub base_frequency: f64,
    /// rad, signed.
    pub swing_amplitude_default: f64,
    /// m.
    pub extension_center: f64,
    /// m.
    pub extension_amplitude_default: f64,
    pub frequency_bounds: [f64; 2],
    pub amplitude_bounds: [f64; 2],
    /// Relative frequency change per unit modulation.
    pub frequency_gain: f64,
    /// Relative amplitude change per unit modulation.
    pub amplitude_gain: f64,
    /// rad per unit residual.
    pub residual_swing_scale: f64,
    /// m per unit residual.
    pub residual_extension_scale: f64,
    /// Actuator limit on |swing|, rad.
    pub swing_limit: f64,
    /// Actuator range of leg extension, m.
    pub extension_bounds: [f64; 2],
}

impl Default for TgConfig {
    fn default() -> Self {
        TgConfig {
            base_frequency: 2.0,
            swing_amplitude_default: -0.25,
            extension_center: 0.16,
            extension_amplitude_default: 0.03,
            frequency_bounds: [0.5, 4.0],
            amplitude_bounds: [-0.45, -0.05],
            frequency_gain: 0.5,
            amplitude_gain: 0.5,
            residual_swing_scale: 0.3,
            residual_extension_scale: 0.05,
            swing_limit: 0.5,
            extension_bounds: [0.10, 0.22],
        }
    }
}

fn check_interval(name: &str, b: [f64; 2]) -> Result<()> {
    if !(b[0].is_finite() && b[1].is_finite() && b[0] < b[1]) {
        return Err(Error::Config(format!(
            "{name} must be an ordered interval of positive width, got {b:?}"
        )));
    }
    Ok(())
}

impl TgConfig {
    pub fn validate(&self) -> Result<()> {
        check_interval("tg frequency_bounds", self.frequency_bounds)?;
        check_interval("tg amplitude_bounds", self.amplitude_bounds)?;
        check_interval("tg extension_bounds", self.extension_bounds)?;
        let inside = |v: f64, b: [f64; 2]| v >= b[0] && v <= b[1];
        if !inside(self.base_frequency, self.frequency_bounds) {
            return Err(Error::Config("tg base_frequency outside frequency_bounds".into()));
        }
        if !inside(self.swing_amplitude_default, self.amplitude_bounds) {
            return Err(Error::Config(
                "tg swing_amplitude_default outside amplitude_bounds".into(),
            ));
        }
        if !inside(self.extension_center, self.extension_bounds) {
            return Err(Error::Config("tg extension_center outside extension_bounds".into()));
        }
        let positives = [
            ("tg frequency_bounds lower end", self.frequency_bounds[0]),
            ("tg swing_limit", self.swing_limit),
            ("tg extension_amplitude_default", self.extension_amplitude_default),
        ];
        for (name, v) in positives {
            if v.is_nan() || v <= 0.0 {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        let finite = [
            self.frequency_gain,
            self.amplitude_gain,
            self.residual_swing_scale,
            self.residual_extension_scale,
        ];
        if finite.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Config(
                "tg gains and residual scales must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }

    /// Largest |swing rate| the actuators can be commanded to in one step of `dt`.
    pub fn max_swing_rate(&self, dt: f64) -> f64 {
        2.0 * self.swing_limit / dt
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TgState {
    pub phase: [f64; NUM_LEGS],
    pub frequency: [f64; NUM_LEGS],
    pub swing_amplitude: [f64; NUM_LEGS],
}

impl TgState {
    /// Trot phasing: the diagonal pairs (front-left, rear-right) and
    /// (front-right, rear-left) are half a cycle apart.
    pub fn trot(cfg: &TgConfig) -> Self {
        TgState {
            phase: [0.0, PI, PI, 0.0],
            frequency: [cfg.base_frequency; NUM_LEGS],
            swing_amplitude: [cfg.swing_amplitude_default; NUM_LEGS],
        }
    }

    /// True when leg `i` bears load.
    pub fn in_stance(&self, leg: usize) -> bool {
        self.phase[leg].cos() >= 0.0
    }

    /// Left/right exchanged.
    pub fn mirrored(&self) -> Self {
        TgState {
            phase: MIRROR_LEGS.map(|i| self.phase[i]),
            frequency: MIRROR_LEGS.map(|i| self.frequency[i]),
            swing_amplitude: MIRROR_LEGS.map(|i| self.swing_amplitude[i]),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MotorCommand {
    /// rad.
    pub swing: [f64; NUM_LEGS],
    /// m.
    pub extension: [f64; NUM_LEGS],
}

impl MotorCommand {
    pub fn clamped(mut self, cfg: &TgConfig) -> Self {
        for leg in 0..NUM_LEGS {
            self.swing[leg] = self.swing[leg].clamp(-cfg.swing_limit, cfg.swing_limit);
            self.extension[leg] = self.extension[leg].clamp(cfg.extension_bounds[0], cfg.extension_bounds[1]);
        }
        self
    }

    pub fn mirrored(&self) -> Self {
        MotorCommand {
            swing: MIRROR_LEGS.map(|i| self.swing[i]),
            extension: MIRROR_LEGS.map(|i| self.extension[i]),
        }
    }
}

/// Clipped 16-d policy output split into its two halves.
#[derive(Clone, Debug, PartialEq)]
pub struct PmtgAction {
    /// Per-leg frequency modulation then per-leg amplitude modulation.
    pub modulation: [f64; 2 * NUM_LEGS],
    /// Per-leg swing residual then per-leg extension residual.
    pub residuals: [f64; 2 * NUM_LEGS],
}

impl PmtgAction {
    pub fn zero() -> Self {
        PmtgAction {
            modulation: [0.0; 8],
            residuals: [0.0; 8],
        }
    }

    /// Splits a 16-entry policy output, clipping every entry to `[-1, 1]`.
    pub fn from_raw(raw: &[f64]) -> Result<Self> {
        if raw.len() != ACTION_DIM {
            return Err(Error::dim("pmtg action", ACTION_DIM, raw.len()));
        }
        if raw.iter().any(|v| v.is_nan()) {
            return Err(Error::NonFinite("pmtg action".into()));
        }
        let mut a = PmtgAction::zero();
        for i in 0..8 {
            a.modulation[i] = raw[i].clamp(-1.0, 1.0);
            a.residuals[i] = raw[8 + i].clamp(-1.0, 1.0);
        }
        Ok(a)
    }

    pub fn mirrored(&self) -> Self {
        let swap = |v: &[f64; 8]| {
            let mut out = [0.0; 8];
            for leg in 0..NUM_LEGS {
                out[leg] = v[MIRROR_LEGS[leg]];
                out[NUM_LEGS + leg] = v[NUM_LEGS + MIRROR_LEGS[leg]];
            }
            out
        };
        PmtgAction {
            modulation: swap(&self.modulation),
            residuals: swap(&self.residuals),
        }
    }
}

fn wrap_phase(phase: f64) -> f64 {
    let w = phase.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Applies one step of frequency/amplitude modulation and advances phases.
pub fn tg_step(state: &TgState, modulation: &[f64; 8], cfg: &TgConfig, dt: f64) -> Result<TgState> {
    if modulation.iter().any(|m| !m.is_finite()) {
        return Err(Error::NonFinite("tg modulation".into()));
    }
    if dt.is_nan() || dt < 0.0 {
        return Err(Error::Config(format!("tg step dt must be non-negative, got {dt}")));
    }
    if dt == 0.0 {
        return Ok(state.clone());
    }
    let [f_lo, f_hi] = cfg.frequency_bounds;
    let [a_lo, a_hi] = cfg.amplitude_bounds;
    let mut next = state.clone();
    for leg in 0..NUM_LEGS {
        let f = (cfg.base_frequency * (1.0 + modulation[leg] * cfg.frequency_gain)).clamp(f_lo, f_hi);
        let a =
            (cfg.swing_amplitude_default * (1.0 + modulation[NUM_LEGS + leg] * cfg.amplitude_gain)).clamp(a_lo, a_hi);
        next.frequency[leg] = f;
        next.swing_amplitude[leg] = a;
        next.phase[leg] = wrap_phase(state.phase[leg] + TAU * f * dt);
    }
    Ok(next)
}

/// Circular foot trajectory: swing `A sin(phase)`, extension `c + a cos(phase)`.
pub fn tg_foot_targets(state: &TgState, cfg: &TgConfig) -> MotorCommand {
    let mut cmd = MotorCommand {
        swing: [0.0; NUM_LEGS],
        extension: [0.0; NUM_LEGS],
    };
    for leg in 0..NUM_LEGS {
        let (s, c) = state.phase[leg].sin_cos();
        cmd.swing[leg] = state.swing_amplitude[leg] * s;
        cmd.extension[leg] = cfg.extension_center + cfg.extension_amplitude_default * c;
    }
    cmd.clamped(cfg)
}

/// `(sin, cos)` of each leg phase.
pub fn pmtg_observe(state: &TgState) -> [f64; TG_OBS_DIM] {
    let mut obs = [0.0; TG_OBS_DIM];
    for leg in 0..NUM_LEGS {
        let (s, c) = state.phase[leg].sin_cos();
        obs[2 * leg] = s;
        obs[2 * leg + 1] = c;
    }
    obs
}

/// Adds scaled residuals to the generator targets and clamps to actuator limits.
pub fn compose_action(targets: &MotorCommand, residuals: &[f64; 8], cfg: &TgConfig) -> MotorCommand {
    let mut cmd = targets.clone();
    for leg in 0..NUM_LEGS {
        // skipping exact zeros keeps the identity bit-exact (-0.0 + 0.0 == +0.0)
        if residuals[leg] != 0.0 {
            cmd.swing[leg] += residuals[leg] * cfg.residual_swing_scale;
        }
        if residuals[NUM_LEGS + leg] != 0.0 {
            cmd.extension[leg] += residuals[NUM_LEGS + leg] * cfg.residual_extension_scale;
        }
    }
    cmd.clamped(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn default_config_is_valid() {
        TgConfig::default().validate().unwrap();
        let mut bad = TgConfig::default();
        bad.frequency_bounds = [3.0, 1.0];
        assert!(bad.validate().is_err());
        let mut bad = TgConfig::default();
        bad.base_frequency = 10.0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn zero_modulation_phase_advance() {
        let cfg = TgConfig::default();
        let s0 = TgState::trot(&cfg);
        let s1 = tg_step(&s0, &[0.0; 8], &cfg, 0.006).unwrap();
        // 2*pi*2 Hz*6 ms
        let expected = TAU * 2.0 * 0.006;
        assert!((expected - 0.0754).abs() < 1e-4);
        for leg in 0..NUM_LEGS {
            let adv = (s1.phase[leg] - s0.phase[leg]).rem_euclid(TAU);
            assert!((adv - expected).abs() < 1e-12, "leg {leg}: {adv}");
        }
    }

    #[test]
    fn zero_dt_is_identity() {
        let cfg = TgConfig::default();
        let s0 = TgState::trot(&cfg);
        assert_eq!(tg_step(&s0, &[0.7; 8], &cfg, 0.0).unwrap(), s0);
    }

    #[test]
    fn frequency_modulation_and_clamp() {
        let cfg = TgConfig::default();
        let mut m = [0.0; 8];
        m[0] = 1.0;
        let s = tg_step(&TgState::trot(&cfg), &m, &cfg, 0.006).unwrap();
        assert_eq!(s.frequency[0], 3.0);
        assert_eq!(s.frequency[1], 2.0);

        let mut tight = cfg.clone();
        tight.frequency_bounds = [1.0, 2.5];
        let s = tg_step(&TgState::trot(&tight), &m, &tight, 0.006).unwrap();
        assert_eq!(s.frequency[0], 2.5);
    }

    #[test]
    fn non_finite_modulation_rejected() {
        let cfg = TgConfig::default();
        let mut m = [0.0; 8];
        m[3] = f64::NAN;
        assert!(tg_step(&TgState::trot(&cfg), &m, &cfg, 0.006).is_err());
    }

    #[test]
    fn foot_targets_at_cardinal_phases() {
        let cfg = TgConfig::default();
        let a = cfg.swing_amplitude_default;
        let mut s = TgState::trot(&cfg);
        s.phase = [0.0, PI / 2.0, PI, 0.0];
        let t = tg_foot_targets(&s, &cfg);
        assert_eq!(t.swing[0], 0.0);
        assert_eq!(t.extension[0], cfg.extension_center + cfg.extension_amplitude_default);
        assert_eq!(t.swing[1], a);
        assert!((t.extension[1] - cfg.extension_center).abs() < 1e-15);
        assert!(t.swing[2].abs() < 1e-15);
        assert!((t.extension[2] - (cfg.extension_center - cfg.extension_amplitude_default)).abs() < 1e-15);
        assert!(s.in_stance(0) && !s.in_stance(2));
    }

    #[test]
    fn observation_encoding() {
        let cfg = TgConfig::default();
        let mut s = TgState::trot(&cfg);
        s.phase = [0.0; 4];
        assert_eq!(pmtg_observe(&s), [0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
        s.phase[0] = PI / 2.0;
        let o = pmtg_observe(&s);
        assert_eq!(o[0], 1.0);
        assert!(o[1].abs() < 1e-15);
        assert_eq!(&o[2..], &[0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn compose_residuals() {
        let cfg = TgConfig::default();
        let mut s = TgState::trot(&cfg);
        s.phase = [0.3, 1.0, 2.0, 4.0];
        let t = tg_foot_targets(&s, &cfg);
        assert_eq!(compose_action(&t, &[0.0; 8], &cfg), t);

        let mut r = [0.0; 8];
        r[0] = 1.0;
        let c = compose_action(&t, &r, &cfg);
        assert!((c.swing[0] - (t.swing[0] + 0.3)).abs() < 1e-15);
        assert_eq!(&c.swing[1..], &t.swing[1..]);

        // drive front-left swing beyond the actuator limit
        let mut big = t.clone();
        big.swing[0] = 0.45;
        let c = compose_action(&big, &r, &cfg);
        assert_eq!(c.swing[0], cfg.swing_limit);
        r[0] = -1.0;
        big.swing[0] = -0.45;
        assert_eq!(compose_action(&big, &r, &cfg).swing[0], -cfg.swing_limit);
    }

    #[test]
    fn open_loop_targets_are_periodic() {
        let cfg = TgConfig::default();
        // dt dividing the period exactly keeps the comparison in whole steps
        let dt = 0.005;
        let steps_per_period = (1.0 / cfg.base_frequency / dt).round() as usize;
        let mut s = TgState::trot(&cfg);
        let mut history = Vec::new();
        for _ in 0..3 * steps_per_period {
            history.push(tg_foot_targets(&s, &cfg));
            s = tg_step(&s, &[0.0; 8], &cfg, dt).unwrap();
        }
        for k in 1..3 {
            for t in 0..steps_per_period {
                let a = &history[t];
                let b = &history[t + k * steps_per_period];
                for leg in 0..NUM_LEGS {
                    assert!((a.swing[leg] - b.swing[leg]).abs() < 1e-9);
                    assert!((a.extension[leg] - b.extension[leg]).abs() < 1e-9);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn phases_stay_wrapped_and_monotone(
            mods in prop::collection::vec(prop::array::uniform8(-1f64..1.0), 1..200),
            dt in 1e-4f64..0.05,
        ) {
            let cfg = TgConfig::default();
            let mut s = TgState::trot(&cfg);
            let mut unwrapped = s.phase;
            for m in &mods {
                let next = tg_step(&s, m, &cfg, dt).unwrap();
                for leg in 0..NUM_LEGS {
                    prop_assert!(next.phase[leg] >= 0.0 && next.phase[leg] < TAU);
                    prop_assert!(next.frequency[leg] >= cfg.frequency_bounds[0] && next.frequency[leg] <= cfg.frequency_bounds[1]);
                    prop_assert!(next.swing_amplitude[leg] >= cfg.amplitude_bounds[0] && next.swing_amplitude[leg] <= cfg.amplitude_bounds[1]);
                    let inc = TAU * next.frequency[leg] * dt;
                    prop_assert!(inc > 0.0);
                    unwrapped[leg] += inc;
                    let diff = (unwrapped[leg] - next.phase[leg]).rem_euclid(TAU);
                    prop_assert!(diff < 1e-6 || TAU - diff < 1e-6);
                }
                s = next;
            }
            for o in pmtg_observe(&s).chunks(2) {
                prop_assert!((o[0] * o[0] + o[1] * o[1] - 1.0).abs() < 1e-12);
            }
        }
    }
}
