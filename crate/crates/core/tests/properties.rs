//! Property tests for the cross-module invariants.

use std::f64::consts::TAU;

use proptest::prelude::*;

use hrllab::ars::{ars_update, ars_update_masked, train, ArsConfig, DirectionEval, FnObjective, TrainOptions};
use hrllab::experiments::Method;
use hrllab::experiments::{expert_episode, low_level_mask, ExpertRewardConfig, SweepSpec};
use hrllab::hrl::{run_episode, HrlPolicy, RolloutOptions};
use hrllab::io::csv::{read_csv, write_csv, Schema};
use hrllab::io::{Checkpoint, CheckpointMeta};
use hrllab::linear_policy::{clip_unit, linear_forward, Layout, LinearMap, MapShape, ParamVector};
use hrllab::pmtg::{compose_action, tg_foot_targets, tg_step, PmtgAction, TgConfig, TgState};
use hrllab::sim::{Env, EnvConfig, Path, Task};

fn plain_vector(values: Vec<f64>) -> ParamVector {
    let n = values.len();
    ParamVector::new(values, Layout::new(vec![MapShape::new(1, n - 1)]).unwrap()).unwrap()
}

fn action() -> impl Strategy<Value = PmtgAction> {
    prop::collection::vec(-1.5f64..1.5, 16).prop_map(|raw| PmtgAction::from_raw(&raw).unwrap())
}

fn hrl_params(k: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, HrlPolicy::layout(k).len())
}

fn straight_task(len: f64, half_width: f64) -> Task {
    Task::Corridor(Path::new(vec![[0.0, 0.0], [len, 0.0]], half_width).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn linear_map_is_linear_without_bias(
        w in prop::collection::vec(-2.0f64..2.0, 12),
        x in prop::collection::vec(-2.0f64..2.0, 4),
        y in prop::collection::vec(-2.0f64..2.0, 4),
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
    ) {
        let map = LinearMap::new(3, 4, w, vec![0.0; 3]).unwrap();
        let mix: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
        let lhs = linear_forward(&map, &mix).unwrap();
        let fx = linear_forward(&map, &x).unwrap();
        let fy = linear_forward(&map, &y).unwrap();
        for i in 0..3 {
            prop_assert!((lhs[i] - (a * fx[i] + b * fy[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn clip_is_idempotent_and_monotone(v in prop::collection::vec(-5.0f64..5.0, 1..20), d in 0.0f64..3.0) {
        let once = clip_unit(&v).unwrap();
        prop_assert_eq!(clip_unit(&once).unwrap(), once.clone());
        let shifted: Vec<f64> = v.iter().map(|x| x + d).collect();
        let up = clip_unit(&shifted).unwrap();
        for (lo, hi) in once.iter().zip(&up) {
            prop_assert!(lo <= hi);
        }
    }

    #[test]
    fn unmodulated_generator_is_periodic(k in 1usize..5, steps in 0usize..400) {
        // dt divides the period exactly so k periods are a whole number of ticks
        let cfg = TgConfig::default();
        let dt = 1.0 / (cfg.base_frequency * 100.0);
        let mut s = TgState::trot(&cfg);
        for _ in 0..steps {
            s = tg_step(&s, &[0.0; 8], &cfg, dt).unwrap();
        }
        let before = tg_foot_targets(&s, &cfg);
        for _ in 0..(100 * k) {
            s = tg_step(&s, &[0.0; 8], &cfg, dt).unwrap();
        }
        let after = tg_foot_targets(&s, &cfg);
        for leg in 0..4 {
            prop_assert!((before.swing[leg] - after.swing[leg]).abs() < 1e-9);
            prop_assert!((before.extension[leg] - after.extension[leg]).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_residuals_leave_targets_unchanged(
        phases in prop::array::uniform4(0.0f64..TAU),
    ) {
        let cfg = TgConfig::default();
        let mut s = TgState::trot(&cfg);
        s.phase = phases;
        let targets = tg_foot_targets(&s, &cfg);
        let composed = compose_action(&targets, &[0.0; 8], &cfg);
        for leg in 0..4 {
            prop_assert_eq!(composed.swing[leg].to_bits(), targets.swing[leg].to_bits());
            prop_assert_eq!(composed.extension[leg].to_bits(), targets.extension[leg].to_bits());
        }
    }

    #[test]
    fn identical_inputs_give_identical_trajectories(
        actions in prop::collection::vec(action(), 1..200),
        seed in any::<u64>(),
        noise in 0.0f64..0.05,
    ) {
        let mut cfg = EnvConfig::default();
        cfg.imu_noise_std = noise;
        let run = || {
            let mut env = Env::new(straight_task(20.0, 2.0), cfg.clone(), seed).unwrap();
            let mut out = Vec::new();
            for a in &actions {
                if env.is_done() {
                    break;
                }
                out.push(env.apply(a).unwrap().clone());
            }
            (out, env.state().clone())
        };
        prop_assert_eq!(run(), run());
    }

    #[test]
    fn terminated_state_never_changes(actions in prop::collection::vec(action(), 1..400)) {
        let mut cfg = EnvConfig::default();
        cfg.max_steps = 60;
        let mut env = Env::new(straight_task(5.0, 0.15), cfg, 0).unwrap();
        for a in &actions {
            if env.is_done() {
                let frozen = env.state().clone();
                prop_assert!(env.apply(a).is_err());
                prop_assert_eq!(env.state(), &frozen);
            } else {
                env.apply(a).unwrap();
            }
        }
    }

    #[test]
    fn mirrored_actions_mirror_the_trajectory(
        actions in prop::collection::vec(action(), 1..300),
        bend in -1.0f64..1.0,
    ) {
        let path = Path::new(vec![[0.0, 0.0], [1.5, 0.0], [1.5 + 2.0 * bend.cos(), 2.0 * bend.sin()]], 0.5).unwrap();
        let cfg = EnvConfig::default();
        let mut a = Env::new(Task::Corridor(path.clone()), cfg.clone(), 0).unwrap();
        let mut b = Env::from_state(Task::Corridor(path.mirrored()), cfg, a.state().mirrored(), 0).unwrap();
        for act in &actions {
            if a.is_done() {
                prop_assert!(b.is_done());
                break;
            }
            let ra = a.apply(act).unwrap().reward;
            let rb = b.apply(&act.mirrored()).unwrap().reward;
            let (sa, sb) = (a.state(), b.state());
            prop_assert!((sa.position[0] - sb.position[0]).abs() < 1e-9);
            prop_assert!((sa.position[1] + sb.position[1]).abs() < 1e-9);
            prop_assert!(hrllab::sim::wrap_angle(sa.yaw + sb.yaw).abs() < 1e-9);
            prop_assert!((sa.yaw_rate + sb.yaw_rate).abs() < 1e-9);
            prop_assert!((ra - rb).abs() < 1e-9);
        }
    }

    #[test]
    fn episode_return_telescopes(k in 1usize..5, values in hrl_params(4), seed in any::<u64>()) {
        let n = HrlPolicy::layout(k).len();
        let policy = HrlPolicy::from_params(&values.iter().cycle().take(n).copied().collect::<Vec<_>>(), k).unwrap();
        let mut cfg = EnvConfig::default();
        cfg.max_steps = 1500;
        let opts = RolloutOptions { seed, record_steps: true, ..RolloutOptions::default() };
        let log = run_episode(&policy, &straight_task(4.0, 0.6), &cfg, &opts).unwrap();
        let d = |p: [f64; 2]| (p[0] - 4.0).hypot(p[1]);
        let sum: f64 = log.steps.iter().map(|s| s.reward).sum();
        prop_assert!((sum - (d(log.start) - d(log.end))).abs() < 1e-9);
    }

    #[test]
    fn schedule_and_latent_constancy(values in hrl_params(2), bias in -1.5f64..1.5) {
        let mut values = values;
        values[3 * 4 + 2] = bias;
        let policy = HrlPolicy::from_params(&values, 2).unwrap();
        let mut cfg = EnvConfig::default();
        cfg.max_steps = 2500;
        let opts = RolloutOptions { record_steps: true, ..RolloutOptions::default() };
        let task = Task::Corridor(Path::new(vec![[0.0, 0.0], [50.0, 0.0]], 30.0).unwrap());
        let log = run_episode(&policy, &task, &cfg, &opts).unwrap();
        let mut boundary = 0usize;
        let mut expected = Vec::new();
        while boundary < log.num_steps {
            expected.push(boundary);
            let d = log.decisions[expected.len() - 1].duration;
            prop_assert!((100..=700).contains(&d));
            boundary += d as usize;
        }
        let got: Vec<usize> = log.decisions.iter().map(|d| d.step).collect();
        prop_assert_eq!(&got, &expected);
        for s in &log.steps {
            let current = log.decisions.iter().rev().find(|d| d.step <= s.step).unwrap();
            prop_assert_eq!(&s.latent, &current.latent);
        }
    }

    #[test]
    fn masked_coordinates_stay_fixed(
        init in prop::collection::vec(-1.0f64..1.0, 8),
        mask in prop::collection::vec(any::<bool>(), 8),
        seed in 0u64..1000,
    ) {
        let obj = FnObjective(|x: &[f64], _| -x.iter().map(|v| (v - 0.5).powi(2)).sum::<f64>());
        let cfg = ArsConfig { iterations: 5, master_seed: seed, workers: 1, ..ArsConfig::default() };
        let start = plain_vector(init);
        let opts = TrainOptions { mask: Some(mask.clone()), ..TrainOptions::default() };
        let out = train(&obj, &start, &cfg, &opts).unwrap();
        for (i, frozen) in mask.iter().enumerate() {
            if *frozen {
                prop_assert_eq!(out.params.values()[i].to_bits(), start.values()[i].to_bits());
            }
        }
    }

    #[test]
    fn update_ignores_positive_reward_scale(
        rewards in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 6),
        dirs in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 4), 6),
        c in 1e-3f64..1e3,
        b in 1usize..7,
    ) {
        let cfg = ArsConfig { num_directions: 6, top_directions: b, ..ArsConfig::default() };
        let theta = plain_vector(vec![0.1, -0.2, 0.3, 0.0]);
        let evals = |s: f64| -> Vec<DirectionEval> {
            rewards.iter().zip(&dirs).enumerate()
                .map(|(index, ((p, m), d))| DirectionEval { index, direction: d.clone(), r_plus: s * p, r_minus: s * m })
                .collect()
        };
        let a = ars_update(&theta, &evals(1.0), &cfg).unwrap();
        let z = ars_update(&theta, &evals(c), &cfg).unwrap();
        for (x, y) in a.values().iter().zip(z.values()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn full_top_b_is_vanilla_random_search(
        rewards in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 4),
        dirs in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 3), 4),
    ) {
        let cfg = ArsConfig { num_directions: 4, top_directions: 4, step_size: 0.05, ..ArsConfig::default() };
        let theta = plain_vector(vec![0.5, -0.5, 1.0]);
        let evals: Vec<DirectionEval> = rewards.iter().zip(&dirs).enumerate()
            .map(|(index, ((p, m), d))| DirectionEval { index, direction: d.clone(), r_plus: *p, r_minus: *m })
            .collect();
        // brute force: population std over all 2N rewards, plain sum over directions
        let all: Vec<f64> = rewards.iter().flat_map(|(p, m)| [*p, *m]).collect();
        let mean = all.iter().sum::<f64>() / 8.0;
        let mut sigma = (all.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / 8.0).sqrt();
        if sigma < 1e-8 {
            sigma = 1.0;
        }
        let next = ars_update(&theta, &evals, &cfg).unwrap();
        for j in 0..3 {
            let step: f64 = rewards.iter().zip(&dirs).map(|((p, m), d)| (p - m) * d[j]).sum();
            let expected = theta.values()[j] + 0.05 / (4.0 * sigma) * step;
            prop_assert!((next.values()[j] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn updates_stay_finite(
        rewards in prop::collection::vec((-1e6f64..1e6, -1e6f64..1e6), 3),
        same in any::<bool>(),
    ) {
        let cfg = ArsConfig { num_directions: 3, top_directions: 2, ..ArsConfig::default() };
        let theta = plain_vector(vec![0.0, 0.0]);
        let evals: Vec<DirectionEval> = rewards.iter().enumerate()
            .map(|(index, (p, m))| {
                let (p, m) = if same { (1.0, 1.0) } else { (*p, *m) };
                DirectionEval { index, direction: vec![1.0, -1.0], r_plus: p, r_minus: m }
            })
            .collect();
        let mask = [false, true];
        let next = ars_update_masked(&theta, &evals, &cfg, Some(&mask)).unwrap();
        prop_assert!(next.values().iter().all(|v| v.is_finite()));
        prop_assert_eq!(next.values()[1], 0.0);
    }

    #[test]
    fn transfer_mask_is_the_low_level_slice(k in 1usize..8) {
        let layout = HrlPolicy::layout(k);
        let mask = low_level_mask(k);
        let frozen: Vec<usize> = (0..layout.len()).filter(|i| mask[*i]).collect();
        let low: Vec<usize> = layout.slice_of(1).collect();
        prop_assert_eq!(frozen, low);
    }

    #[test]
    fn sweep_rows_match_grid_size(dims in 1usize..4, points in 1usize..6) {
        let spec = SweepSpec::uniform(dims, points, 10);
        prop_assert_eq!(spec.cells().len(), points.pow(dims as u32));
        prop_assert!(spec.cells().iter().flatten().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn expert_rewards_respect_caps(values in hrl_params(1), command in -1.0f64..=1.0, scale in 0.1f64..8.0) {
        let scaled: Vec<f64> = values.iter().map(|v| v * scale).collect();
        let policy = HrlPolicy::from_params(&scaled, 1).unwrap();
        let reward = ExpertRewardConfig { episode_steps: 200, ..ExpertRewardConfig::default() };
        let opts = RolloutOptions { record_steps: true, ..RolloutOptions::default() };
        let ep = expert_episode(&policy, command, &reward, &EnvConfig::default(), &opts).unwrap();
        for s in &ep.steps {
            prop_assert!(s.r_steer <= command.abs());
            prop_assert!(s.r_fw <= reward.forward_cap);
        }
    }

    #[test]
    fn csv_round_trip_is_exact(rows in prop::collection::vec(prop::collection::vec(-1e9f64..1e9, 6), 0..20)) {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("sweep.csv");
        write_csv(&rows, Schema::Sweep { latent_dim: 2 }, &file).unwrap();
        let table = read_csv(&file).unwrap();
        prop_assert_eq!(table.rows.len(), rows.len());
        for (a, b) in table.rows.iter().flatten().zip(rows.iter().flatten()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn checkpoint_round_trip_is_exact(values in prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::ZERO | prop::num::f64::SUBNORMAL, 256 + 16)) {
        let params = ParamVector::new(values, Method::Flat.layout(0)).unwrap();
        let meta = CheckpointMeta { master_seed: 3, iteration: 9, source_path: "path2".into() };
        let c = Checkpoint::new(Method::Flat, 0, params, meta, None).unwrap();
        let back = Checkpoint::parse(&c.to_text(), std::path::Path::new("p.ckpt")).unwrap();
        for (a, b) in back.params.values().iter().zip(c.params.values()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
