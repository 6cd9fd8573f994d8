//! End-to-end tests of the `hrllab` binary.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hrllab::io::csv::{read_csv, read_csv_as, Schema};
use hrllab::io::load_checkpoint;

fn hrllab(cwd: &Path, args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_hrllab"));
    cmd.current_dir(cwd).args(args);
    for (k, _) in std::env::vars() {
        if k.starts_with("HRLLAB_") {
            cmd.env_remove(k);
        }
    }
    cmd.output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn files(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

const QUICK: &[&str] = &[
    "--set",
    "ars.iterations=6",
    "--set",
    "experiment.num_seeds=2",
    "--set",
    "env.max_steps=400",
];

fn train(cwd: &Path, method: &str, out: &str, extra: &[&str]) -> Output {
    let mut args = vec!["train", method, "--out", out];
    args.extend_from_slice(QUICK);
    args.extend_from_slice(extra);
    let o = hrllab(cwd, &args);
    assert!(o.status.success(), "{}", stderr(&o));
    o
}

#[test]
fn usage_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    for args in [
        &["frobnicate"][..],
        &["train", "hrl"],
        &["train", "sideways", "--out", "x"],
        &["eval", "--bogus"],
    ] {
        let o = hrllab(tmp.path(), args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
    }
    assert_eq!(hrllab(tmp.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn config_errors_exit_3_and_name_the_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let o = hrllab(
        tmp.path(),
        &["train", "hrl", "--out", "r", "--set", "ars.step_sise=0.1"],
    );
    assert_eq!(o.status.code(), Some(3));
    assert!(
        stderr(&o).contains("resolve config") && stderr(&o).contains("step_sise"),
        "{}",
        stderr(&o)
    );

    std::fs::write(
        tmp.path().join("bad.cfg"),
        "[ars]\nnum_directions = 4\ntop_directions = 9\n",
    )
    .unwrap();
    let o = hrllab(tmp.path(), &["train", "flat", "--config", "bad.cfg", "--out", "r"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));

    std::fs::write(tmp.path().join("typo.cfg"), "[arz]\nx = 1\n").unwrap();
    let o = hrllab(tmp.path(), &["train", "flat", "--config", "typo.cfg", "--out", "r"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("line 1"), "{}", stderr(&o));

    let o = Command::new(env!("CARGO_BIN_EXE_hrllab"))
        .current_dir(tmp.path())
        .args(["train", "hrl", "--out", "r"])
        .env("HRLLAB_ARS_NOT_A_KEY", "1")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(3));
    assert!(!tmp.path().join("r").exists());
}

#[test]
fn runtime_errors_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    let o = hrllab(tmp.path(), &["eval", "--checkpoint", "missing.ckpt"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("load checkpoint"), "{}", stderr(&o));

    std::fs::write(
        tmp.path().join("broken.ckpt"),
        "hrllab checkpoint\nformat_version = 1\nmethod = flat\n",
    )
    .unwrap();
    let o = hrllab(tmp.path(), &["eval", "--checkpoint", "broken.ckpt"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("corrupt"), "{}", stderr(&o));
}

#[test]
fn train_writes_the_run_directory_and_nothing_else() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("keep.txt"), "x").unwrap();
    let o = train(tmp.path(), "hrl", "runs/a", &["--set", "ars.master_seed=3"]);
    assert!(stdout(&o).contains("seed 3:") && stdout(&o).contains("seed 4:"));

    let top: Vec<_> = std::fs::read_dir(tmp.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    assert_eq!(top.len(), 2);
    let run = tmp.path().join("runs/a");
    for f in [
        "config.cfg",
        "aggregate.csv",
        "aggregate.svg",
        "best.ckpt",
        "trajectory.csv",
        "trajectory.svg",
        "seed_3/learning_curve.csv",
        "seed_3/checkpoint.ckpt",
        "seed_4/learning_curve.csv",
        "seed_4/checkpoint.ckpt",
    ] {
        assert!(run.join(f).is_file(), "{f}");
    }
    let curve = read_csv_as(&run.join("seed_3/learning_curve.csv"), Schema::LearningCurve).unwrap();
    assert_eq!(curve.rows.len(), 6);
    let ckpt = load_checkpoint(&run.join("seed_4/checkpoint.ckpt")).unwrap();
    assert_eq!((ckpt.meta.master_seed, ckpt.meta.iteration, ckpt.latent_dim), (4, 6, 4));
}

#[test]
fn config_snapshot_reproduces_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    train(tmp.path(), "flat", "a", &["--set", "ars.master_seed=11"]);
    let o = hrllab(tmp.path(), &["train", "flat", "--config", "a/config.cfg", "--out", "b"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(files(&tmp.path().join("a")), files(&tmp.path().join("b")));
}

#[test]
fn environment_overrides_sit_between_file_and_set() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(
        tmp.path().join("c.cfg"),
        "[ars]\nmaster_seed = 1\niterations = 2\n[experiment]\nnum_seeds = 1\n",
    )
    .unwrap();
    let run = |extra: &[&str], out: &str| {
        let mut args = vec![
            "train",
            "flat",
            "--config",
            "c.cfg",
            "--out",
            out,
            "--set",
            "env.max_steps=200",
        ];
        args.extend_from_slice(extra);
        let o = Command::new(env!("CARGO_BIN_EXE_hrllab"))
            .current_dir(tmp.path())
            .args(&args)
            .env("HRLLAB_ARS_MASTER_SEED", "5")
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", stderr(&o));
    };
    run(&[], "env");
    assert!(tmp.path().join("env/seed_5").is_dir());
    run(&["--set", "ars.master_seed=9"], "set");
    assert!(tmp.path().join("set/seed_9").is_dir());
}

#[test]
fn aggregate_standard_error_matches_seed_curves() {
    let tmp = tempfile::tempdir().unwrap();
    train(tmp.path(), "hrl", "r", &["--set", "experiment.num_seeds=3"]);
    let run = tmp.path().join("r");
    let agg = read_csv_as(&run.join("aggregate.csv"), Schema::Aggregate).unwrap();
    let curves: Vec<Vec<f64>> = (0..3)
        .map(|s| {
            read_csv(&run.join(format!("seed_{s}/learning_curve.csv")))
                .unwrap()
                .column("policy_return")
                .unwrap()
        })
        .collect();
    assert_eq!(agg.rows.len(), 6);
    for (t, row) in agg.rows.iter().enumerate() {
        let xs: Vec<f64> = curves.iter().map(|c| c[t]).collect();
        let mean = xs.iter().sum::<f64>() / 3.0;
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 2.0).sqrt();
        assert!((row[1] - mean).abs() < 1e-12);
        assert!((row[2] - sd / 3f64.sqrt()).abs() < 1e-12);
        assert_eq!(row[3], 3.0);
    }
}

#[test]
fn plot_references_every_row() {
    let tmp = tempfile::tempdir().unwrap();
    train(tmp.path(), "flat", "r", &[]);
    let o = hrllab(
        tmp.path(),
        &["plot", "learning-curve", "r/aggregate.csv", "--out", "r/plot.svg"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let svg = std::fs::read_to_string(tmp.path().join("r/plot.svg")).unwrap();
    let rows = read_csv(&tmp.path().join("r/aggregate.csv")).unwrap().rows.len();
    let line = svg.lines().find(|l| l.starts_with("<polyline")).unwrap();
    assert_eq!(line.split('"').nth(1).unwrap().split(' ').count(), rows);

    let o = hrllab(
        tmp.path(),
        &["plot", "trajectory", "r/trajectory.csv", "--path", "path1"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(tmp.path().join("r/trajectory.svg").is_file());

    let o = hrllab(tmp.path(), &["plot", "latent-field", "r/aggregate.csv"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn flat_policy_evaluates_on_the_other_path() {
    let tmp = tempfile::tempdir().unwrap();
    train(tmp.path(), "flat", "r", &[]);
    let o = hrllab(
        tmp.path(),
        &["eval", "--checkpoint", "r/best.ckpt", "--path", "path2", "--out", "ev"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("flat on path2: return="), "{text}");
    let steps: usize = text
        .split("steps=")
        .nth(1)
        .unwrap()
        .split(' ')
        .next()
        .unwrap()
        .parse()
        .unwrap();
    let traj = read_csv(&tmp.path().join("ev/trajectory.csv")).unwrap();
    assert_eq!(traj.schema, Schema::Trajectory { latent_dim: 0 });
    assert_eq!(traj.rows.len(), steps);
}

#[test]
fn hierarchy_eval_marks_every_decision() {
    let tmp = tempfile::tempdir().unwrap();
    train(
        tmp.path(),
        "hrl",
        "r",
        &["--set", "env.max_steps=1500", "--set", "experiment.num_seeds=1"],
    );
    let o = hrllab(tmp.path(), &["eval", "--checkpoint", "r/best.ckpt", "--out", "ev"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let decisions: usize = text
        .split("decisions=")
        .nth(1)
        .unwrap()
        .split(' ')
        .next()
        .unwrap()
        .parse()
        .unwrap();
    let traj = read_csv(&tmp.path().join("ev/trajectory.csv")).unwrap();
    let flags = traj.column("decision_flag").unwrap();
    assert_eq!(flags.iter().filter(|f| **f == 1.0).count(), decisions);
    assert_eq!(flags[0], 1.0);
}

#[test]
fn expert_and_transfer_workflow() {
    let tmp = tempfile::tempdir().unwrap();
    let o = hrllab(
        tmp.path(),
        &[
            "pretrain-expert",
            "--out",
            "low",
            "--set",
            "ars.iterations=3",
            "--set",
            "expert.episode_steps=200",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(tmp.path().join("low/expert_low.ckpt").is_file());

    let o = hrllab(tmp.path(), &["train", "expert-hl", "--out", "ehl"]);
    assert_eq!(
        o.status.code(),
        Some(3),
        "missing expert low level must be a config error"
    );

    train(tmp.path(), "expert-hl", "ehl", &["--expert-low", "low/expert_low.ckpt"]);
    let low = load_checkpoint(&tmp.path().join("low/expert_low.ckpt")).unwrap();
    let high = load_checkpoint(&tmp.path().join("ehl/best.ckpt")).unwrap();
    let n_high = high.params.len() - low.params.len();
    assert_eq!(&high.params.values()[n_high..], low.params.values());

    train(
        tmp.path(),
        "hrl",
        "src",
        &["--set", "policy.latent_dim=2", "--set", "experiment.num_seeds=1"],
    );
    let o = hrllab(tmp.path(), &["transfer", "--source", "ehl/best.ckpt", "--out", "bad"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    let mut args = vec![
        "transfer",
        "--source",
        "src/best.ckpt",
        "--path",
        "path2",
        "--out",
        "tr",
    ];
    args.extend_from_slice(QUICK);
    let o = hrllab(tmp.path(), &args);
    assert!(o.status.success(), "{}", stderr(&o));
    let source = load_checkpoint(&tmp.path().join("src/best.ckpt")).unwrap();
    let moved = load_checkpoint(&tmp.path().join("tr/seed_0/checkpoint.ckpt")).unwrap();
    assert_eq!(moved.latent_dim, 2);
    assert_eq!(moved.meta.source_path, "path2");
    let low_start = 3 * 4 + 3;
    assert_eq!(
        &moved.params.values()[low_start..],
        &source.params.values()[low_start..]
    );

    let o = hrllab(
        tmp.path(),
        &[
            "sweep-latent",
            "--checkpoint",
            "src/best.ckpt",
            "--out",
            "sw",
            "--set",
            "sweep.points=3",
            "--set",
            "sweep.steps_per_cell=50",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let sweep = read_csv(&tmp.path().join("sw/sweep.csv")).unwrap();
    assert_eq!(sweep.schema, Schema::Sweep { latent_dim: 2 });
    assert_eq!(sweep.rows.len(), 9);
    assert!(tmp.path().join("sw/latent_field.svg").is_file());
}

#[test]
fn paths_subcommand_lists_and_shows() {
    let tmp = tempfile::tempdir().unwrap();
    let o = hrllab(tmp.path(), &["paths", "list"]);
    assert!(stdout(&o).contains("path1:") && stdout(&o).contains("path2:"));
    let o = hrllab(tmp.path(), &["paths", "show", "path2"]);
    assert!(stdout(&o).contains("half_width 0.35"));
    let o = hrllab(tmp.path(), &["paths", "show", "nowhere"]);
    assert_eq!(o.status.code(), Some(1));
}
