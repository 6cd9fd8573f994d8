//! Run configuration: `[section]` headers and `key = value` lines.
//!
//! Every key has a default, unknown sections and keys are rejected, and
//! environment variables named `HRLLAB_<SECTION>_<KEY>` override the file.

use std::fmt::Write as _;
use std::path::Path as FsPath;

use crate::ars::{ArsConfig, ArsVersion, DirectionDistribution};
use crate::error::{Error, Result};
use crate::experiments::{ExperimentSpec, ExpertRewardConfig, Method, SteerRewardMode, SweepSpec};
use crate::sim::EnvConfig;

pub const ENV_PREFIX: &str = "HRLLAB_";

#[derive(Clone, Debug, PartialEq)]
pub struct PolicySection {
    pub latent_dim: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSection {
    pub method: Method,
    pub path: String,
    pub num_seeds: usize,
    pub stop_on_success: bool,
    /// Checkpoint to start training from instead of zeros.
    pub init_checkpoint: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSection {
    /// Grid points per latent dimension.
    pub points: usize,
    pub steps_per_cell: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub env: EnvConfig,
    pub policy: PolicySection,
    pub ars: ArsConfig,
    pub experiment: ExperimentSection,
    pub expert: ExpertRewardConfig,
    pub sweep: SweepSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        let spec = ExperimentSpec::default();
        RunConfig {
            env: spec.env,
            policy: PolicySection {
                latent_dim: spec.latent_dim,
            },
            ars: spec.ars,
            experiment: ExperimentSection {
                method: spec.method,
                path: spec.path,
                num_seeds: spec.num_seeds,
                stop_on_success: spec.stop_on_success,
                init_checkpoint: None,
            },
            expert: ExpertRewardConfig::default(),
            sweep: SweepSection {
                points: 9,
                steps_per_cell: 1000,
            },
        }
    }
}

trait ConfigValue: Sized {
    fn parse_value(s: &str) -> std::result::Result<Self, String>;
    fn to_config_string(&self) -> String;
}

impl ConfigValue for f64 {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        let v: f64 = s.parse().map_err(|_| format!("expected a number, got '{s}'"))?;
        if !v.is_finite() {
            return Err(format!("expected a finite number, got '{s}'"));
        }
        Ok(v)
    }

    fn to_config_string(&self) -> String {
        format!("{self:?}")
    }
}

impl ConfigValue for usize {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        s.parse()
            .map_err(|_| format!("expected a non-negative integer, got '{s}'"))
    }

    fn to_config_string(&self) -> String {
        self.to_string()
    }
}

impl ConfigValue for u64 {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        s.parse()
            .map_err(|_| format!("expected a non-negative integer, got '{s}'"))
    }

    fn to_config_string(&self) -> String {
        self.to_string()
    }
}

impl ConfigValue for bool {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        match s {
            "true" => Ok(true),
            "false" => Ok(false),
            _ => Err(format!("expected true or false, got '{s}'")),
        }
    }

    fn to_config_string(&self) -> String {
        self.to_string()
    }
}

impl ConfigValue for String {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        if s.is_empty() {
            return Err("expected a non-empty value".into());
        }
        Ok(s.to_string())
    }

    fn to_config_string(&self) -> String {
        self.clone()
    }
}

impl ConfigValue for Option<String> {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        Ok((!s.is_empty()).then(|| s.to_string()))
    }

    fn to_config_string(&self) -> String {
        self.clone().unwrap_or_default()
    }
}

impl ConfigValue for ArsVersion {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        match s {
            "v1" => Ok(ArsVersion::V1),
            "v2" => Ok(ArsVersion::V2),
            _ => Err(format!("expected v1 or v2, got '{s}'")),
        }
    }

    fn to_config_string(&self) -> String {
        match self {
            ArsVersion::V1 => "v1".into(),
            ArsVersion::V2 => "v2".into(),
        }
    }
}

impl ConfigValue for DirectionDistribution {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        match s {
            "gaussian" => Ok(DirectionDistribution::Gaussian),
            "sphere" => Ok(DirectionDistribution::Sphere),
            _ => Err(format!("expected gaussian or sphere, got '{s}'")),
        }
    }

    fn to_config_string(&self) -> String {
        match self {
            DirectionDistribution::Gaussian => "gaussian".into(),
            DirectionDistribution::Sphere => "sphere".into(),
        }
    }
}

impl ConfigValue for Method {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        s.parse().map_err(|e: Error| e.to_string())
    }

    fn to_config_string(&self) -> String {
        self.as_str().into()
    }
}

impl ConfigValue for SteerRewardMode {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        s.parse().map_err(|e: Error| e.to_string())
    }

    fn to_config_string(&self) -> String {
        self.as_str().into()
    }
}

struct Field {
    section: &'static str,
    key: &'static str,
    get: fn(&RunConfig) -> String,
    set: fn(&mut RunConfig, &str) -> std::result::Result<(), String>,
}

macro_rules! field {
    ($section:literal, $key:literal, $($path:tt)+) => {
        Field {
            section: $section,
            key: $key,
            get: |c| c.$($path)+.to_config_string(),
            set: |c, v| {
                c.$($path)+ = ConfigValue::parse_value(v)?;
                Ok(())
            },
        }
    };
}

const FIELDS: &[Field] = &[
    field!("env", "dt", env.dt),
    field!("env", "max_steps", env.max_steps),
    field!("env", "k_v", env.k_v),
    field!("env", "k_omega", env.k_omega),
    field!("env", "track_width", env.track_width),
    field!("env", "leg_length", env.leg_length),
    field!("env", "tau_v", env.tau_v),
    field!("env", "tau_omega", env.tau_omega),
    field!("env", "imu_noise_std", env.imu_noise_std),
    field!("env", "goal_radius", env.goal_radius),
    field!("env", "attitude_natural_frequency", env.attitude.natural_frequency),
    field!("env", "attitude_damping_ratio", env.attitude.damping_ratio),
    field!("env", "attitude_pitch_gain", env.attitude.pitch_gain),
    field!("env", "attitude_roll_gain", env.attitude.roll_gain),
    field!("env", "tg_base_frequency", env.tg.base_frequency),
    field!("env", "tg_swing_amplitude", env.tg.swing_amplitude_default),
    field!("env", "tg_extension_center", env.tg.extension_center),
    field!("env", "tg_extension_amplitude", env.tg.extension_amplitude_default),
    field!("env", "tg_frequency_min", env.tg.frequency_bounds[0]),
    field!("env", "tg_frequency_max", env.tg.frequency_bounds[1]),
    field!("env", "tg_amplitude_min", env.tg.amplitude_bounds[0]),
    field!("env", "tg_amplitude_max", env.tg.amplitude_bounds[1]),
    field!("env", "tg_frequency_gain", env.tg.frequency_gain),
    field!("env", "tg_amplitude_gain", env.tg.amplitude_gain),
    field!("env", "tg_residual_swing_scale", env.tg.residual_swing_scale),
    field!("env", "tg_residual_extension_scale", env.tg.residual_extension_scale),
    field!("env", "tg_swing_limit", env.tg.swing_limit),
    field!("env", "tg_extension_min", env.tg.extension_bounds[0]),
    field!("env", "tg_extension_max", env.tg.extension_bounds[1]),
    field!("policy", "latent_dim", policy.latent_dim),
    field!("ars", "step_size", ars.step_size),
    field!("ars", "num_directions", ars.num_directions),
    field!("ars", "top_directions", ars.top_directions),
    field!("ars", "noise_std", ars.noise_std),
    field!("ars", "version", ars.version),
    field!("ars", "distribution", ars.distribution),
    field!("ars", "master_seed", ars.master_seed),
    field!("ars", "iterations", ars.iterations),
    field!("ars", "rollouts_per_eval", ars.rollouts_per_eval),
    field!("ars", "workers", ars.workers),
    field!("experiment", "method", experiment.method),
    field!("experiment", "path", experiment.path),
    field!("experiment", "num_seeds", experiment.num_seeds),
    field!("experiment", "stop_on_success", experiment.stop_on_success),
    field!("experiment", "init_checkpoint", experiment.init_checkpoint),
    field!("expert", "window", expert.window),
    field!("expert", "forward_weight", expert.forward_weight),
    field!("expert", "forward_cap", expert.forward_cap),
    field!("expert", "steer_scale", expert.steer_scale),
    field!("expert", "mode", expert.mode),
    field!("expert", "episode_steps", expert.episode_steps),
    field!("expert", "episodes_per_eval", expert.episodes_per_eval),
    field!("sweep", "points", sweep.points),
    field!("sweep", "steps_per_cell", sweep.steps_per_cell),
];

fn find_field(section: &str, key: &str) -> Option<&'static Field> {
    FIELDS.iter().find(|f| f.section == section && f.key == key)
}

impl RunConfig {
    /// Parses a config file body on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut section: Option<String> = None;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at = |msg: String| Error::Config(format!("line {}: {msg}", n + 1));
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| at(format!("malformed section header '{line}'")))?
                    .trim();
                if !FIELDS.iter().any(|f| f.section == name) {
                    return Err(at(format!("unknown section [{name}]")));
                }
                section = Some(name.to_string());
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| at(format!("expected 'key = value', got '{line}'")))?;
            let section = section
                .as_deref()
                .ok_or_else(|| at("key outside of any [section]".into()))?;
            cfg.set(section, key.trim(), value.trim()).map_err(|e| match e {
                Error::Config(msg) => at(msg),
                other => at(other.to_string()),
            })?;
        }
        Ok(cfg)
    }

    pub fn load(file: &FsPath) -> Result<Self> {
        let text = std::fs::read_to_string(file).map_err(|e| Error::io(file, e))?;
        Self::parse(&text)
    }

    /// Sets one key; rejects unknown keys and malformed values.
    pub fn set(&mut self, section: &str, key: &str, value: &str) -> Result<()> {
        let field = find_field(section, key).ok_or_else(|| Error::Config(format!("unknown key {section}.{key}")))?;
        (field.set)(self, value).map_err(|e| Error::Config(format!("{section}.{key}: {e}")))
    }

    /// Applies a `section.key=value` assignment.
    pub fn set_assignment(&mut self, assignment: &str) -> Result<()> {
        let (name, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected section.key=value, got '{assignment}'")))?;
        let (section, key) = name
            .trim()
            .split_once('.')
            .ok_or_else(|| Error::Config(format!("expected section.key=value, got '{assignment}'")))?;
        self.set(section, key, value.trim())
    }

    /// Applies `HRLLAB_<SECTION>_<KEY>` variables; other `HRLLAB_` names are errors.
    pub fn apply_env<I, K, V>(&mut self, vars: I) -> Result<()>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        for (name, value) in vars {
            let Some(rest) = name.as_ref().strip_prefix(ENV_PREFIX) else {
                continue;
            };
            let field = FIELDS
                .iter()
                .find(|f| env_suffix(f) == rest)
                .ok_or_else(|| Error::Config(format!("unknown override variable {}", name.as_ref())))?;
            (field.set)(self, value.as_ref().trim()).map_err(|e| Error::Config(format!("{}: {e}", name.as_ref())))?;
        }
        Ok(())
    }

    /// The fully resolved configuration in file syntax.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut current = "";
        for f in FIELDS {
            if f.section != current {
                if !current.is_empty() {
                    out.push('\n');
                }
                let _ = writeln!(out, "[{}]", f.section);
                current = f.section;
            }
            let _ = writeln!(out, "{} = {}", f.key, (f.get)(self));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        self.spec().validate()?;
        self.expert.validate()?;
        self.sweep_spec().validate()
    }

    pub fn spec(&self) -> ExperimentSpec {
        ExperimentSpec {
            method: self.experiment.method,
            latent_dim: self.policy.latent_dim,
            path: self.experiment.path.clone(),
            env: self.env.clone(),
            ars: self.ars.clone(),
            num_seeds: self.experiment.num_seeds,
            stop_on_success: self.experiment.stop_on_success,
        }
    }

    pub fn sweep_spec(&self) -> SweepSpec {
        SweepSpec::uniform(self.policy.latent_dim, self.sweep.points, self.sweep.steps_per_cell)
    }
}

fn env_suffix(f: &Field) -> String {
    format!("{}_{}", f.section, f.key).to_uppercase()
}

/// Names of every override variable, for help text.
pub fn env_variable_names() -> Vec<String> {
    FIELDS
        .iter()
        .map(|f| format!("{ENV_PREFIX}{}", env_suffix(f)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
        assert_eq!(RunConfig::parse("# nothing\n\n").unwrap(), RunConfig::default());
    }

    #[test]
    fn sections_and_values() {
        let text = "[ars]\nmaster_seed = 7\nversion = v2 # inline comment\n[env]\ndt=0.01\n[experiment]\nmethod = flat\nstop_on_success = true\n";
        let cfg = RunConfig::parse(text).unwrap();
        assert_eq!(cfg.ars.master_seed, 7);
        assert_eq!(cfg.ars.version, ArsVersion::V2);
        assert_eq!(cfg.env.dt, 0.01);
        assert_eq!(cfg.experiment.method, Method::Flat);
        assert!(cfg.experiment.stop_on_success);
    }

    #[test]
    fn unknown_keys_and_sections_rejected() {
        assert!(RunConfig::parse("[ars]\nmaster_sed = 1\n").is_err());
        assert!(RunConfig::parse("[arse]\n").is_err());
        assert!(RunConfig::parse("master_seed = 1\n").is_err());
        assert!(RunConfig::parse("[ars]\nmaster_seed 1\n").is_err());
        assert!(RunConfig::parse("[ars]\nstep_size = fast\n").is_err());
        assert!(RunConfig::parse("[env]\ndt = nan\n").is_err());
        let err = RunConfig::parse("[ars]\n\nbogus = 1\n").unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
    }

    #[test]
    fn echo_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.env.dt = 0.1 + 0.2;
        cfg.ars.version = ArsVersion::V2;
        cfg.ars.distribution = DirectionDistribution::Sphere;
        cfg.experiment.init_checkpoint = Some("runs/a/best.ckpt".into());
        cfg.expert.mode = SteerRewardMode::Literal;
        let text = cfg.to_text();
        assert_eq!(RunConfig::parse(&text).unwrap(), cfg);
        assert!(text.contains("[sweep]"));
    }

    #[test]
    fn env_overrides() {
        let mut cfg = RunConfig::default();
        cfg.apply_env([
            ("HRLLAB_ARS_MASTER_SEED", "42"),
            ("PATH", "/bin"),
            ("HRLLAB_ENV_TG_FREQUENCY_MAX", "3.5"),
        ])
        .unwrap();
        assert_eq!(cfg.ars.master_seed, 42);
        assert_eq!(cfg.env.tg.frequency_bounds[1], 3.5);
        assert!(cfg.apply_env([("HRLLAB_ARS_SEED", "1")]).is_err());
        assert!(cfg.apply_env([("HRLLAB_ARS_MASTER_SEED", "-1")]).is_err());
        assert!(env_variable_names().contains(&"HRLLAB_ARS_MASTER_SEED".to_string()));
    }

    #[test]
    fn assignments() {
        let mut cfg = RunConfig::default();
        cfg.set_assignment("policy.latent_dim=2").unwrap();
        assert_eq!(cfg.policy.latent_dim, 2);
        assert!(cfg.set_assignment("latent_dim=2").is_err());
        assert!(cfg.set_assignment("policy.latent_dim").is_err());
    }

    #[test]
    fn every_key_is_unique() {
        for (i, a) in FIELDS.iter().enumerate() {
            for b in &FIELDS[i + 1..] {
                assert!(env_suffix(a) != env_suffix(b), "{}.{}", a.section, a.key);
            }
        }
    }

    #[test]
    fn validation_catches_bad_combinations() {
        let mut cfg = RunConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.ars.top_directions = 20;
        assert!(cfg.validate().is_err());
    }
}
