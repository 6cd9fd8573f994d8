//! The `hrllab` command line.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error, 3 configuration
//! error. Every failure is reported as `error: <stage>: <message>`.

use std::ffi::OsString;
use std::fmt;
use std::path::{Path as FsPath, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::experiments::{
    distance_ratio, eval_trajectory, heading_spread, latent_sweep, median, pretrain_expert_ll, success_threshold,
    train_expert_hl, train_method, transfer, Method, Policy, SeedRun, SweepSpec, TrainResult,
};
use crate::hrl::EpisodeLog;
use crate::io::csv::{aggregate_rows, learning_curve_rows, sweep_rows, trajectory_rows};
use crate::io::svg::{latent_field_svg, learning_curve_svg, trajectory_svg, write_svg};
use crate::io::{load_checkpoint, read_csv, save_checkpoint, write_csv, Checkpoint, CheckpointMeta, RunConfig, Schema};
use crate::linear_policy::{unflatten, ParamVector};
use crate::sim::{builtin_path_text, load_path, Task, BUILTIN_PATHS};

pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "hrllab",
    version,
    about = "Train and analyse hierarchical latent-command locomotion policies"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
struct ConfigArgs {
    /// Config file; missing keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set ars.master_seed=3`. Applied after
    /// HRLLAB_* environment variables.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a policy from scratch on the configured path.
    Train {
        #[arg(value_enum)]
        method: TrainMethod,
        #[command(flatten)]
        config: ConfigArgs,
        /// Run directory.
        #[arg(long)]
        out: PathBuf,
        /// Expert low-level checkpoint (expert-hl only).
        #[arg(long)]
        expert_low: Option<PathBuf>,
    },
    /// Pre-train the expert steering low level in the open arena.
    PretrainExpert {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Retrain the high level of a hierarchy on a new path, low level frozen.
    Transfer {
        /// Hierarchical checkpoint providing the low level.
        #[arg(long)]
        source: Option<PathBuf>,
        /// Target path id or file; defaults to experiment.path.
        #[arg(long)]
        path: Option<String>,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one greedy episode and report its return.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Path id or file; defaults to the checkpoint's training path.
        #[arg(long)]
        path: Option<String>,
        #[command(flatten)]
        config: ConfigArgs,
        /// Directory for trajectory.csv and trajectory.svg.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Hold each latent command of a grid fixed and record the motion.
    SweepLatent {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a CSV table as SVG.
    Plot {
        #[command(subcommand)]
        kind: PlotKind,
    },
    /// Built-in corridor paths.
    Paths {
        #[command(subcommand)]
        action: PathsAction,
    },
}

#[derive(clap::ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum TrainMethod {
    Hrl,
    Flat,
    ExpertHl,
}

impl TrainMethod {
    fn method(self) -> Method {
        match self {
            TrainMethod::Hrl => Method::HrlLatent,
            TrainMethod::Flat => Method::Flat,
            TrainMethod::ExpertHl => Method::Expert,
        }
    }
}

#[derive(Args, Debug)]
struct PlotArgs {
    csv: PathBuf,
    /// Output file; defaults to the CSV path with an .svg extension.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    title: Option<String>,
}

#[derive(Subcommand, Debug)]
enum PlotKind {
    LearningCurve(PlotArgs),
    Trajectory {
        #[command(flatten)]
        args: PlotArgs,
        /// Path the trajectory was recorded on.
        #[arg(long)]
        path: String,
    },
    LatentField(PlotArgs),
}

#[derive(Subcommand, Debug)]
enum PathsAction {
    List,
    Show { id: String },
}

/// A failure and the stage it happened in.
#[derive(Debug)]
pub struct Failure {
    pub stage: String,
    pub error: Error,
    pub config_stage: bool,
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        if self.config_stage || matches!(self.error, Error::Config(_)) {
            EXIT_CONFIG
        } else {
            EXIT_RUNTIME
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.stage, self.error)
    }
}

trait Stage<T> {
    fn stage(self, stage: &str) -> std::result::Result<T, Failure>;
}

impl<T> Stage<T> for Result<T> {
    fn stage(self, stage: &str) -> std::result::Result<T, Failure> {
        self.map_err(|error| Failure {
            stage: stage.to_string(),
            error,
            config_stage: false,
        })
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

fn config_failure(error: Error) -> Failure {
    Failure {
        stage: "resolve config".into(),
        error,
        config_stage: true,
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {f}");
            f.exit_code()
        }
    }
}

/// File, then `HRLLAB_*` environment variables, then `--set` assignments.
fn resolve(args: &ConfigArgs) -> Outcome<RunConfig> {
    let mut cfg = match &args.config {
        Some(file) => RunConfig::load(file).map_err(config_failure)?,
        None => RunConfig::default(),
    };
    cfg.apply_env(std::env::vars()).map_err(config_failure)?;
    for s in &args.sets {
        cfg.set_assignment(s).map_err(config_failure)?;
    }
    Ok(cfg)
}

fn validated(cfg: RunConfig) -> Outcome<RunConfig> {
    cfg.validate().map_err(config_failure)?;
    Ok(cfg)
}

fn create_dir(dir: &FsPath) -> Outcome<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Error::io(dir, e))
        .stage("create run directory")
}

fn write_text(file: &FsPath, text: &str, stage: &str) -> Outcome<()> {
    std::fs::write(file, text).map_err(|e| Error::io(file, e)).stage(stage)
}

fn execute(cli: Cli) -> Outcome<()> {
    match cli.command {
        Command::Train {
            method,
            config,
            out,
            expert_low,
        } => cmd_train(method, &config, &out, expert_low),
        Command::PretrainExpert { config, out } => cmd_pretrain(&config, &out),
        Command::Transfer {
            source,
            path,
            config,
            out,
        } => cmd_transfer(source, path, &config, &out),
        Command::Eval {
            checkpoint,
            path,
            config,
            out,
        } => cmd_eval(&checkpoint, path, &config, out.as_deref()),
        Command::SweepLatent {
            checkpoint,
            config,
            out,
        } => cmd_sweep(&checkpoint, &config, &out),
        Command::Plot { kind } => cmd_plot(kind),
        Command::Paths { action } => cmd_paths(action),
    }
}

fn checkpoint_of(run: &SeedRun, method: Method, latent_dim: usize, path: &str) -> Result<Checkpoint> {
    Checkpoint::new(
        method,
        latent_dim,
        run.params.clone(),
        CheckpointMeta {
            master_seed: run.seed,
            iteration: run.records.len(),
            source_path: path.to_string(),
        },
        run.normalizer.clone(),
    )
}

/// Writes per-seed curves and checkpoints, the aggregate, the best
/// checkpoint and its trajectory, and the plots.
fn write_train_outputs(result: &TrainResult, cfg: &RunConfig, out: &FsPath) -> Outcome<()> {
    for run in &result.runs {
        let dir = out.join(format!("seed_{}", run.seed));
        create_dir(&dir)?;
        write_csv(
            &learning_curve_rows(&run.records),
            Schema::LearningCurve,
            &dir.join("learning_curve.csv"),
        )
        .stage("write learning curve")?;
        let ckpt = checkpoint_of(run, result.method, result.latent_dim, &result.path).stage("build checkpoint")?;
        save_checkpoint(&ckpt, &dir.join("checkpoint.ckpt")).stage("save checkpoint")?;
    }
    let agg_file = out.join("aggregate.csv");
    write_csv(&aggregate_rows(&result.aggregate), Schema::Aggregate, &agg_file).stage("write aggregate curve")?;

    let best = result.best();
    let ckpt = checkpoint_of(best, result.method, result.latent_dim, &result.path).stage("build checkpoint")?;
    save_checkpoint(&ckpt, &out.join("best.ckpt")).stage("save checkpoint")?;

    let path = load_path(&result.path).stage("load path")?;
    let policy = ckpt.policy().stage("build policy")?;
    let log = eval_trajectory(
        &policy,
        ckpt.normalizer.as_ref(),
        &Task::Corridor(path.clone()),
        &cfg.env,
    )
    .stage("evaluate best policy")?;
    write_trajectory(&log, result.latent_dim, &path, out)?;

    let title = format!("{} on {}", result.method, result.path);
    let agg = read_csv(&agg_file).stage("read aggregate curve")?;
    let svg = learning_curve_svg(&agg, &title).stage("plot learning curve")?;
    write_svg(&svg, &out.join("aggregate.svg")).stage("plot learning curve")
}

fn write_trajectory(log: &EpisodeLog, latent_dim: usize, path: &crate::sim::Path, out: &FsPath) -> Outcome<()> {
    let file = out.join("trajectory.csv");
    write_csv(&trajectory_rows(log), Schema::Trajectory { latent_dim }, &file).stage("write trajectory")?;
    let table = read_csv(&file).stage("read trajectory")?;
    let svg = trajectory_svg(&table, path, "trajectory").stage("plot trajectory")?;
    write_svg(&svg, &out.join("trajectory.svg")).stage("plot trajectory")
}

fn report(result: &TrainResult) {
    println!(
        "{} latent_dim={} path={} threshold={:.4}",
        result.method, result.latent_dim, result.path, result.threshold
    );
    for run in &result.runs {
        let solved = run.solved_at.map_or("-".to_string(), |i| i.to_string());
        println!(
            "seed {}: iterations={} solved_at={} final_return={:.4}",
            run.seed,
            run.records.len(),
            solved,
            run.final_return
        );
    }
    println!("median solved_at: {}", result.median_solved_at());
}

fn load_checkpoint_as(file: &FsPath, method: Method, what: &str) -> Outcome<Checkpoint> {
    let ckpt = load_checkpoint(file).stage(&format!("load {what}"))?;
    if ckpt.method != method {
        return Err(Failure {
            stage: format!("load {what}"),
            error: Error::LayoutMismatch(format!(
                "{} holds a {} policy, expected {method}",
                file.display(),
                ckpt.method
            )),
            config_stage: false,
        });
    }
    Ok(ckpt)
}

fn missing_checkpoint(what: &str, flag: &str) -> Failure {
    config_failure(Error::Config(format!(
        "{what} needs a checkpoint: pass {flag} or set experiment.init_checkpoint"
    )))
}

fn cmd_train(which: TrainMethod, args: &ConfigArgs, out: &FsPath, expert_low: Option<PathBuf>) -> Outcome<()> {
    let mut cfg = resolve(args)?;
    cfg.experiment.method = which.method();
    if which == TrainMethod::ExpertHl {
        if let Some(file) = &expert_low {
            cfg.experiment.init_checkpoint = Some(file.display().to_string());
        }
        cfg.policy.latent_dim = 1;
    }
    let cfg = validated(cfg)?;
    let spec = cfg.spec();
    spec.load_path().map_err(config_failure)?;
    create_dir(out)?;
    write_text(&out.join("config.cfg"), &cfg.to_text(), "write config snapshot")?;

    let result = match which {
        TrainMethod::Hrl | TrainMethod::Flat => {
            let method = which.method();
            let latent_dim = spec.effective_latent_dim();
            let (init, normalizer) = match &cfg.experiment.init_checkpoint {
                Some(file) => {
                    let ckpt = load_checkpoint_as(FsPath::new(file), method, "initial checkpoint")?;
                    (ckpt.params, ckpt.normalizer)
                }
                None => (ParamVector::zeros(method.layout(latent_dim)), None),
            };
            train_method(&spec, &init, None, normalizer).stage("train")?
        }
        TrainMethod::ExpertHl => {
            let file = cfg
                .experiment
                .init_checkpoint
                .clone()
                .ok_or_else(|| missing_checkpoint("train expert-hl", "--expert-low"))?;
            let low = load_checkpoint_as(FsPath::new(&file), Method::ExpertLow, "expert low level")?;
            let map = unflatten(&low.params, &Method::ExpertLow.layout(1))
                .stage("load expert low level")?
                .pop()
                .expect("one map");
            train_expert_hl(&map, low.normalizer, &spec).stage("train")?
        }
    };
    write_train_outputs(&result, &cfg, out)?;
    report(&result);
    Ok(())
}

fn cmd_pretrain(args: &ConfigArgs, out: &FsPath) -> Outcome<()> {
    let cfg = validated(resolve(args)?)?;
    create_dir(out)?;
    write_text(&out.join("config.cfg"), &cfg.to_text(), "write config snapshot")?;
    let run = pretrain_expert_ll(&cfg.expert, &cfg.ars, &cfg.env).stage("pretrain expert low level")?;
    let curve = out.join("learning_curve.csv");
    write_csv(&learning_curve_rows(&run.records), Schema::LearningCurve, &curve).stage("write learning curve")?;
    let ckpt = checkpoint_of(&run, Method::ExpertLow, 1, "open_arena").stage("build checkpoint")?;
    save_checkpoint(&ckpt, &out.join("expert_low.ckpt")).stage("save checkpoint")?;
    let table = read_csv(&curve).stage("read learning curve")?;
    let svg = learning_curve_svg(&table, "expert low level").stage("plot learning curve")?;
    write_svg(&svg, &out.join("learning_curve.svg")).stage("plot learning curve")?;
    println!(
        "expert low level: iterations={} final_return={:.4}",
        run.records.len(),
        run.final_return
    );
    Ok(())
}

fn cmd_transfer(source: Option<PathBuf>, path: Option<String>, args: &ConfigArgs, out: &FsPath) -> Outcome<()> {
    let mut cfg = resolve(args)?;
    if let Some(file) = source {
        cfg.experiment.init_checkpoint = Some(file.display().to_string());
    }
    if let Some(p) = path {
        cfg.experiment.path = p;
    }
    let file = cfg
        .experiment
        .init_checkpoint
        .clone()
        .ok_or_else(|| missing_checkpoint("transfer", "--source"))?;
    let src = load_checkpoint_as(FsPath::new(&file), Method::HrlLatent, "source checkpoint")?;
    cfg.experiment.method = Method::HrlLatent;
    cfg.policy.latent_dim = src.latent_dim;
    let cfg = validated(cfg)?;
    let spec = cfg.spec();
    spec.load_path().map_err(config_failure)?;
    create_dir(out)?;
    write_text(&out.join("config.cfg"), &cfg.to_text(), "write config snapshot")?;

    let source_policy = match src.policy().stage("load source checkpoint")? {
        Policy::Hrl(p) => p,
        _ => unreachable!("method checked above"),
    };
    let result = transfer(&source_policy, src.normalizer.clone(), &spec).stage("transfer")?;
    write_train_outputs(&result, &cfg, out)?;
    report(&result);
    Ok(())
}

fn cmd_eval(file: &FsPath, path: Option<String>, args: &ConfigArgs, out: Option<&FsPath>) -> Outcome<()> {
    let cfg = validated(resolve(args)?)?;
    let ckpt = load_checkpoint(file).stage("load checkpoint")?;
    let policy = ckpt.policy().stage("build policy")?;
    let path_id = path.unwrap_or_else(|| ckpt.meta.source_path.clone());
    let path = load_path(&path_id).stage("load path")?;
    let log = eval_trajectory(
        &policy,
        ckpt.normalizer.as_ref(),
        &Task::Corridor(path.clone()),
        &cfg.env,
    )
    .stage("evaluate")?;
    if let Some(dir) = out {
        create_dir(dir)?;
        write_trajectory(&log, policy.latent_dim(), &path, dir)?;
    }
    println!(
        "{} on {path_id}: return={:.6} steps={} decisions={} termination={} threshold={:.4}",
        ckpt.method,
        log.total_return,
        log.num_steps,
        log.decisions.len(),
        log.termination.as_str(),
        success_threshold(&path)
    );
    Ok(())
}

fn cmd_sweep(file: &FsPath, args: &ConfigArgs, out: &FsPath) -> Outcome<()> {
    let cfg = validated(resolve(args)?)?;
    let ckpt = load_checkpoint(file).stage("load checkpoint")?;
    let policy = ckpt.policy().stage("build policy")?;
    let hierarchy = policy.hierarchy().ok_or_else(|| Failure {
        stage: "sweep".into(),
        error: Error::Config("a flat policy has no latent command to sweep".into()),
        config_stage: false,
    })?;
    let sweep = SweepSpec::uniform(hierarchy.latent_dim(), cfg.sweep.points, cfg.sweep.steps_per_cell);
    sweep.validate().map_err(config_failure)?;
    create_dir(out)?;
    write_text(&out.join("config.cfg"), &cfg.to_text(), "write config snapshot")?;
    let rows = latent_sweep(hierarchy, ckpt.normalizer.as_ref(), &sweep, &cfg.env).stage("sweep")?;
    let csv_file = out.join("sweep.csv");
    write_csv(
        &sweep_rows(&rows),
        Schema::Sweep {
            latent_dim: hierarchy.latent_dim(),
        },
        &csv_file,
    )
    .stage("write sweep")?;
    let table = read_csv(&csv_file).stage("read sweep")?;
    let svg = latent_field_svg(&table, "latent command sweep").stage("plot latent field")?;
    write_svg(&svg, &out.join("latent_field.svg")).stage("plot latent field")?;
    let distances: Vec<f64> = rows.iter().map(|r| r.distance).collect();
    println!(
        "cells={} heading_spread_deg={:.2} distance_ratio={:.3} median_distance={:.4}",
        rows.len(),
        heading_spread(&rows).to_degrees(),
        distance_ratio(&rows),
        median(distances)
    );
    Ok(())
}

fn cmd_plot(kind: PlotKind) -> Outcome<()> {
    let (args, svg) = match kind {
        PlotKind::LearningCurve(args) => {
            let table = read_csv(&args.csv).stage("read csv")?;
            let title = args.title.clone().unwrap_or_else(|| "learning curve".into());
            let svg = learning_curve_svg(&table, &title).stage("plot learning curve")?;
            (args, svg)
        }
        PlotKind::Trajectory { args, path } => {
            let table = read_csv(&args.csv).stage("read csv")?;
            let path = load_path(&path).stage("load path")?;
            let title = args.title.clone().unwrap_or_else(|| "trajectory".into());
            let svg = trajectory_svg(&table, &path, &title).stage("plot trajectory")?;
            (args, svg)
        }
        PlotKind::LatentField(args) => {
            let table = read_csv(&args.csv).stage("read csv")?;
            let title = args.title.clone().unwrap_or_else(|| "latent command sweep".into());
            let svg = latent_field_svg(&table, &title).stage("plot latent field")?;
            (args, svg)
        }
    };
    let out = args.out.unwrap_or_else(|| args.csv.with_extension("svg"));
    write_svg(&svg, &out).stage("write svg")?;
    println!("{}", out.display());
    Ok(())
}

fn cmd_paths(action: PathsAction) -> Outcome<()> {
    match action {
        PathsAction::List => {
            for id in BUILTIN_PATHS {
                let path = load_path(id).stage("load path")?;
                println!(
                    "{id}: waypoints={} length={:.3} progress_bound={:.3} half_width={:.3}",
                    path.waypoints().len(),
                    path.length(),
                    path.progress_bound(),
                    path.half_width()
                );
            }
        }
        PathsAction::Show { id } => match builtin_path_text(&id) {
            Some(text) => print!("{text}"),
            None => print!("{}", load_path(&id).stage("load path")?.to_text()),
        },
    }
    Ok(())
}
