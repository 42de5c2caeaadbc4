//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line
//! (run with `--nocapture` to see them).
//!
//! Criteria 1-7 and 10 are hard assertions. Criterion 9 is an expected-trend
//! comparison: raw numbers are always reported and the ordering is asserted
//! softly (a reversed ordering prints FAIL(soft) without failing the suite).

use std::f64::consts::PI;

use rand::Rng;

use uavcombat_core::arena;
use uavcombat_core::config::{Algo, RunConfig};
use uavcombat_core::evalharness::{self, ScriptedKind};
use uavcombat_core::flightdyn::UavState;
use uavcombat_core::lfmappo::rollout::TeamController;
use uavcombat_core::lfmappo::{
    self, actor_loss, clipped_surrogate, collect_rollouts, compute_gae, compute_returns,
    lf_value_target, maxmin_solve, OptBundle, PolicyBundle,
};
use uavcombat_core::neuralcore::{
    adam_update, categorical_entropy, categorical_sample, log_softmax, softmax, AdamParams,
    AdamState, Mlp, MlpGrads,
};
use uavcombat_core::rng::SeedTree;
use uavcombat_core::trainer;

/// Small two-versus-two scenario shared by the scaled experiments.
fn cfg_2v2(seed: u64) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.seed = seed;
    cfg.arena.team_size = 2;
    cfg.arena.group_size = 2;
    cfg.arena.t_limit_s = 120.0;
    cfg.arena.spawn.x_range = [-500.0, 500.0];
    cfg.arena.spawn.y_range = [-1900.0, -1500.0];
    cfg.arena.spawn.z_range = [5000.0, 6000.0];
    cfg.arena.spawn.speed_range = [170.0, 210.0];
    cfg.net.hidden = vec![32, 32];
    cfg.net.log_std_init = -1.0;
    cfg.train.arenas = 8;
    cfg.train.steps_per_arena = 96;
    cfg.train.minibatch_size = 128;
    cfg.train.epochs = 8;
    cfg.train.eval_every = 0;
    cfg.train.checkpoint_every = 0;
    cfg.train.opponent = "scripted:pure_pursuit".to_string();
    cfg
}

/// In-process training loop returning per-iteration mean returns.
fn train_policy(cfg: &RunConfig, iters: usize) -> (PolicyBundle, Vec<f64>) {
    let seeds = SeedTree::new(cfg.seed);
    let mut bundle = PolicyBundle::init(cfg, &seeds);
    let mut opt = OptBundle::for_bundle(&bundle);
    let mut returns = Vec::with_capacity(iters);
    for iter in 0..iters as u64 {
        let mut buf = collect_rollouts(&bundle, cfg, &seeds, iter).unwrap();
        let metrics =
            lfmappo::train_iteration(&mut bundle, &mut opt, &mut buf, cfg, &seeds, iter).unwrap();
        assert!(!metrics.rolled_back, "iteration {iter} rolled back");
        returns.push(metrics.mean_return);
    }
    (bundle, returns)
}

// ---------------------------------------------------------------------------
// 1. Returns & GAE match brute-force nested sums.
// ---------------------------------------------------------------------------

fn returns_oracle(rewards: &[f64], dones: &[bool], gamma: f64) -> Vec<f64> {
    (0..rewards.len())
        .map(|t| {
            let mut acc = 0.0;
            for k in t..rewards.len() {
                acc += gamma.powi((k - t) as i32) * rewards[k];
                if dones[k] {
                    break;
                }
            }
            acc
        })
        .collect()
}

fn gae_oracle(
    rewards: &[f64],
    values: &[f64],
    bootstrap: f64,
    dones: &[bool],
    gamma: f64,
    lambda: f64,
) -> Vec<f64> {
    let n = rewards.len();
    let delta = |t: usize| -> f64 {
        let next = if dones[t] {
            0.0
        } else if t + 1 < n {
            values[t + 1]
        } else {
            bootstrap
        };
        rewards[t] + gamma * next - values[t]
    };
    (0..n)
        .map(|t| {
            let mut acc = 0.0;
            for l in 0..(n - t) {
                acc += (gamma * lambda).powi(l as i32) * delta(t + l);
                if dones[t + l] {
                    break;
                }
            }
            acc
        })
        .collect()
}

#[test]
fn c01_returns_and_gae_oracle_equivalence() {
    let start = std::time::Instant::now();
    let tree = SeedTree::new(0xACC1);
    let mut max_err = 0.0f64;
    for case in 0..100u64 {
        let mut rng = tree.rng("c1", &[case]);
        let n = rng.random_range(1..=32);
        let rewards: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let values: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let dones: Vec<bool> = (0..n).map(|_| rng.random_range(0.0..1.0) < 0.2).collect();
        let bootstrap = rng.random_range(-5.0..5.0);

        let g = compute_returns(&rewards, &dones, 0.99);
        for (a, b) in g.iter().zip(returns_oracle(&rewards, &dones, 0.99)) {
            max_err = max_err.max((a - b).abs());
        }
        let adv = compute_gae(&rewards, &values, bootstrap, &dones, 0.99, 0.95).unwrap();
        for (a, b) in adv.iter().zip(gae_oracle(&rewards, &values, bootstrap, &dones, 0.99, 0.95))
        {
            max_err = max_err.max((a - b).abs());
        }
    }
    let elapsed = start.elapsed();
    assert!(max_err < 1e-10, "max deviation {max_err}");
    assert!(elapsed.as_secs_f64() < 5.0);
    println!(
        "ACCEPTANCE 1 (returns/GAE oracle, 100 episodes): PASS (max err {max_err:.2e}, {:.2}s)",
        elapsed.as_secs_f64()
    );
}

// ---------------------------------------------------------------------------
// 2. Backward pass matches central finite differences.
// ---------------------------------------------------------------------------

#[test]
fn c02_gradient_finite_difference_check() {
    let start = std::time::Instant::now();
    let tree = SeedTree::new(0xACC2);
    let h = 1e-5;
    let mut worst = 0.0f64;
    for case in 0..50u64 {
        let mut rng = tree.rng("c2", &[case]);
        let dims =
            [2 + (case % 4) as usize, 5, 4 + (case % 3) as usize, 1 + (case % 3) as usize];
        let mut net = Mlp::init(&dims, &mut rng, 1.0);
        let input: Vec<f64> = (0..dims[0]).map(|_| rng.random_range(-1.0..1.0)).collect();
        let upstream: Vec<f64> = (0..dims[3]).map(|_| rng.random_range(-1.0..1.0)).collect();

        // Keep hidden pre-activations away from the ReLU kinks: recompute
        // them layer by layer and nudge biases until everything clears the
        // margin.
        for _ in 0..100 {
            let mut any_near = false;
            let mut x = input.clone();
            for k in 0..net.layers.len() {
                let layer = &net.layers[k];
                let mut z = layer.b.clone();
                for o in 0..layer.out_dim {
                    for i in 0..layer.in_dim {
                        z[o] += layer.w[o * layer.in_dim + i] * x[i];
                    }
                }
                if k + 1 == net.layers.len() {
                    break;
                }
                for (o, &v) in z.iter().enumerate() {
                    if v.abs() < 1e-3 {
                        net.layers[k].b[o] += 0.05;
                        any_near = true;
                    }
                }
                x = z.iter().map(|&v| v.max(0.0)).collect();
            }
            if !any_near {
                break;
            }
        }

        let loss = |net: &Mlp| -> f64 {
            let y = net.infer(&input).unwrap();
            y.iter().zip(upstream.iter()).map(|(a, b)| a * b).sum()
        };
        let (_, cache) = net.forward(&input).unwrap();
        let grads = net.backward(&cache, &upstream).unwrap();
        for l in 0..net.layers.len() {
            for idx in 0..net.layers[l].w.len() {
                let orig = net.layers[l].w[idx];
                net.layers[l].w[idx] = orig + h;
                let plus = loss(&net);
                net.layers[l].w[idx] = orig - h;
                let minus = loss(&net);
                net.layers[l].w[idx] = orig;
                let fd = (plus - minus) / (2.0 * h);
                let an = grads.layers[l].w[idx];
                let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-6);
                worst = worst.max(rel);
            }
            for idx in 0..net.layers[l].b.len() {
                let orig = net.layers[l].b[idx];
                net.layers[l].b[idx] = orig + h;
                let plus = loss(&net);
                net.layers[l].b[idx] = orig - h;
                let minus = loss(&net);
                net.layers[l].b[idx] = orig;
                let fd = (plus - minus) / (2.0 * h);
                let an = grads.layers[l].b[idx];
                let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-6);
                worst = worst.max(rel);
            }
        }
    }
    let elapsed = start.elapsed();
    assert!(worst < 1e-3, "worst relative error {worst}");
    assert!(elapsed.as_secs_f64() < 30.0);
    println!(
        "ACCEPTANCE 2 (gradient vs finite differences, 50 nets): PASS (worst rel err {worst:.2e}, {:.2}s)",
        elapsed.as_secs_f64()
    );
}

// ---------------------------------------------------------------------------
// 3. Clip arithmetic table and the pointwise min-property audit.
// ---------------------------------------------------------------------------

#[test]
fn c03_ppo_clip_arithmetic_and_audit() {
    // Example table, exact.
    assert_eq!(clipped_surrogate(1.0, 2.5, 0.2), 2.5);
    assert_eq!(clipped_surrogate(1.5, 2.0, 0.2), 2.4);
    assert_eq!(clipped_surrogate(0.5, -1.0, 0.2), -0.8);
    let surr = actor_loss(&[0.0], &[0.0], &[1.0], 0.2);
    assert_eq!(surr, 1.0);

    // Ten-iteration smoke run with the per-minibatch audit enabled.
    let mut cfg = cfg_2v2(0xC3);
    cfg.train.audit_clip = true;
    cfg.train.arenas = 2;
    cfg.train.steps_per_arena = 30;
    let seeds = SeedTree::new(cfg.seed);
    let mut bundle = PolicyBundle::init(&cfg, &seeds);
    let mut opt = OptBundle::for_bundle(&bundle);
    let mut audited = 0u64;
    for iter in 0..10u64 {
        let mut buf = collect_rollouts(&bundle, &cfg, &seeds, iter).unwrap();
        let metrics =
            lfmappo::train_iteration(&mut bundle, &mut opt, &mut buf, &cfg, &seeds, iter)
                .unwrap();
        assert_eq!(
            metrics.clip_audit_violations, 0,
            "min-property violated at iteration {iter}"
        );
        audited += 1;
    }
    println!(
        "ACCEPTANCE 3 (clip arithmetic + minibatch audit over {audited} iterations): PASS"
    );
}

// ---------------------------------------------------------------------------
// 4. Posture and distance reward suite.
// ---------------------------------------------------------------------------

#[test]
fn c04_reward_scalar_suite() {
    // Frozen high-precision scalar evaluations.
    let cases = [
        (0.0, 0.0, 1.5),
        (PI / 2.0, PI / 2.0, 0.5740740740740741),
        (2.0 * PI, PI, -1.7831504911630916),
    ];
    for (alpha, beta, expected) in cases {
        let got = arena::posture_reward(alpha, beta);
        assert!(
            (got - expected).abs() < 1e-9,
            "posture({alpha},{beta}) = {got}, expected {expected}"
        );
    }

    // Branch continuity at both knots.
    let d_max = 4000.0;
    for knot in [1.0 / 3.0, 2.0 / 3.0] {
        let at = arena::distance_reward(knot * d_max, d_max);
        assert!((at - knot).abs() < 1e-9, "value at knot {knot}: {at}");
        let below = arena::distance_reward((knot - 1e-12) * d_max, d_max);
        assert!((below - knot).abs() < 1e-9);
    }

    // Strict monotonic decrease over (0, pi] at 1000 samples.
    let mut prev = f64::INFINITY;
    for i in 1..=1000 {
        let s = PI * i as f64 / 1000.0;
        let r = arena::posture_reward(s, 0.0);
        assert!(r < prev, "not strictly decreasing at {s}");
        prev = r;
    }
    println!("ACCEPTANCE 4 (posture/distance reward suite): PASS");
}

// ---------------------------------------------------------------------------
// 5. Max-min solver oracle and matrix-game convergence.
// ---------------------------------------------------------------------------

#[test]
fn c05_maxmin_oracle_and_matrix_game() {
    let start = std::time::Instant::now();

    // Exact agreement with an independent enumeration on 1000 tables.
    let tree = SeedTree::new(0xACC5);
    for case in 0..1000u64 {
        let mut rng = tree.rng("c5-tables", &[case]);
        let table: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..3).map(|_| rng.random_range(-10..=10) as f64).collect())
            .collect();
        let (value, row) = maxmin_solve(&table).unwrap();
        let mut best_v = f64::NEG_INFINITY;
        let mut best_r = usize::MAX;
        for f in 0..3 {
            let mut m = f64::INFINITY;
            for l in 0..3 {
                m = m.min(table[f][l]);
            }
            if m > best_v {
                best_v = m;
                best_r = f;
            }
        }
        assert_eq!(value, best_v);
        assert_eq!(row, best_r);
    }

    // Matrix game with a pure saddle point: follower rows, leader columns.
    let payoff = [
        [0.30, 0.05, 0.40],
        [0.50, 0.20, 0.60],
        [0.00, 0.10, 0.10],
    ];
    let table: Vec<Vec<f64>> = payoff.iter().map(|r| r.to_vec()).collect();
    let (security_value, best_row) = maxmin_solve(&table).unwrap();
    assert_eq!(security_value, 0.20);
    assert_eq!(best_row, 1);

    // One-step environment: a scripted uniform leader announces its action;
    // the follower (conditioned on the announcement) learns by clipped
    // surrogate while its critic regresses on the leader-follower target.
    // The follower critic's pessimistic value min_l V(s0, a_l) must reach
    // the security value.
    let mut converged_at = Vec::new();
    for seed in 0..3u64 {
        let seeds = SeedTree::new(0x3A7 + seed);
        let mut init_rng = seeds.rng("init", &[]);
        let mut actor = Mlp::init(&[4, 32, 3], &mut init_rng, 0.01);
        let mut critic = Mlp::init(&[4, 32, 1], &mut init_rng, 1.0);
        let mut actor_opt = AdamState::for_mlp(&actor);
        let mut critic_opt = AdamState::for_mlp(&critic);
        let adam = AdamParams::with_lr(3e-3);
        let mut env_rng = seeds.rng("env", &[]);
        let (gamma, lf_alpha, clip, c_ent) = (0.99, 0.5, 0.2, 0.01);
        let batch = 32usize;

        let obs_for = |leader: usize| -> Vec<f64> {
            let mut v = vec![1.0, 0.0, 0.0, 0.0];
            v[1 + leader] = 1.0;
            v
        };
        let pessimistic_value = |critic: &Mlp| -> f64 {
            (0..3)
                .map(|l| critic.infer(&obs_for(l)).unwrap()[0])
                .fold(f64::INFINITY, f64::min)
        };

        let mut solved: Option<usize> = None;
        for update in 0..10_000usize {
            // Collect one batch of 1-step episodes.
            let mut obs_batch = Vec::with_capacity(batch);
            let mut actions = Vec::with_capacity(batch);
            let mut logps = Vec::with_capacity(batch);
            let mut rewards = Vec::with_capacity(batch);
            for _ in 0..batch {
                let leader = env_rng.random_range(0..3usize);
                let obs = obs_for(leader);
                let logits = actor.infer(&obs).unwrap();
                let (a_f, logp) = categorical_sample(&logits, &mut env_rng);
                rewards.push(payoff[a_f][leader]);
                obs_batch.push(obs);
                actions.push(a_f);
                logps.push(logp);
            }

            // Critic: leader-follower targets (terminal, so the mixing
            // pulls toward the observed reward; candidates still enumerate).
            let mut critic_grads = MlpGrads::zeros_like(&critic);
            for k in 0..batch {
                let (v, cache) = critic.forward(&obs_batch[k]).unwrap();
                let candidates: Vec<f64> =
                    (0..3).map(|l| critic.infer(&obs_for(l)).unwrap()[0]).collect();
                let target =
                    lf_value_target(v[0], rewards[k], &candidates, gamma, lf_alpha, true)
                        .unwrap();
                let g = critic
                    .backward(&cache, &[2.0 * (v[0] - target) / batch as f64])
                    .unwrap();
                critic_grads.add_scaled(&g, 1.0);
            }
            adam_update(&mut critic, &critic_grads, &mut critic_opt, &adam).unwrap();

            // Actor: clipped surrogate on the one-step advantage.
            let mut actor_grads = MlpGrads::zeros_like(&actor);
            for k in 0..batch {
                let v_now = critic.infer(&obs_batch[k]).unwrap()[0];
                let adv = rewards[k] - v_now;
                let (logits, cache) = actor.forward(&obs_batch[k]).unwrap();
                let lps = log_softmax(&logits);
                let probs = softmax(&logits);
                let ratio = (lps[actions[k]] - logps[k]).exp();
                let unclipped = ratio * adv;
                let clipped = ratio.clamp(1.0 - clip, 1.0 + clip) * adv;
                let mut upstream = vec![0.0; 3];
                if unclipped <= clipped {
                    for j in 0..3 {
                        let ind = if j == actions[k] { 1.0 } else { 0.0 };
                        upstream[j] -= ratio * adv * (ind - probs[j]) / batch as f64;
                    }
                }
                let entropy = categorical_entropy(&logits);
                for j in 0..3 {
                    upstream[j] -= c_ent * (-probs[j] * (lps[j] + entropy)) / batch as f64;
                }
                let g = actor.backward(&cache, &upstream).unwrap();
                actor_grads.add_scaled(&g, 1.0);
            }
            adam_update(&mut actor, &actor_grads, &mut actor_opt, &adam).unwrap();

            if update % 100 == 99 && (pessimistic_value(&critic) - security_value).abs() <= 0.045
            {
                solved = Some(update + 1);
                break;
            }
        }
        let final_gap = (pessimistic_value(&critic) - security_value).abs();
        assert!(
            final_gap <= 0.05,
            "seed {seed}: pessimistic value off by {final_gap}"
        );
        converged_at.push(solved.unwrap_or(10_000));
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 120.0, "took {:.1}s", elapsed.as_secs_f64());
    println!(
        "ACCEPTANCE 5 (max-min oracle + matrix game, 3 seeds): PASS (converged at {converged_at:?} updates, {:.1}s)",
        elapsed.as_secs_f64()
    );
}

// ---------------------------------------------------------------------------
// 6. Geometry predicates vs Monte-Carlo oracle; defaults file constants.
// ---------------------------------------------------------------------------

#[test]
fn c06_geometry_suite_and_default_constants() {
    let cfg = RunConfig::default();
    let wez_half = cfg.arena.angle_convention.half_angle(cfg.arena.wez_angle_rad);
    let fov_half = cfg.arena.angle_convention.half_angle(cfg.arena.missile_fov_rad);
    let mut rng = SeedTree::new(0xACC6).rng("c6", &[]);
    let random_state = |rng: &mut rand_chacha::ChaCha8Rng| -> UavState {
        let mut s = UavState::level(
            [
                rng.random_range(-8000.0..8000.0),
                rng.random_range(-8000.0..8000.0),
                rng.random_range(3500.0..9000.0),
            ],
            rng.random_range(-PI..PI),
            rng.random_range(80.0..320.0),
        );
        s.theta = rng.random_range(-1.2..1.2);
        s.refresh_velocity();
        s
    };
    for k in 0..100_000usize {
        let own = random_state(&mut rng);
        let mut target = random_state(&mut rng);
        if k % 2 == 0 {
            // Half the pairs at close range so both predicate boundaries
            // see traffic.
            let r = rng.random_range(1.0..5000.0);
            let az = rng.random_range(-PI..PI);
            let el: f64 = rng.random_range(-0.6..0.6);
            target.p_x = own.p_x + r * el.cos() * az.cos();
            target.p_y = own.p_y + r * el.cos() * az.sin();
            target.p_z = own.p_z + r * el.sin();
        }
        let h = own.heading_vector();
        let los = [target.p_x - own.p_x, target.p_y - own.p_y, target.p_z - own.p_z];
        let d = (los[0] * los[0] + los[1] * los[1] + los[2] * los[2]).sqrt();
        let cos_alpha = (h[0] * los[0] + h[1] * los[1] + h[2] * los[2]) / d;

        let oracle_wez = d <= cfg.arena.wez_radius_m && cos_alpha >= wez_half.cos();
        let oracle_hit = d < cfg.arena.missile_range_m && cos_alpha >= fov_half.cos();
        assert_eq!(arena::in_wez(&own, &target, &cfg.arena), oracle_wez, "pair {k}");
        assert_eq!(arena::missile_hit(&own, &target, &cfg.arena), oracle_hit, "pair {k}");
    }

    // The shipped defaults carry the experimental constants verbatim.
    let text = std::fs::read_to_string(
        std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.toml"),
    )
    .expect("configs/default.toml");
    let parsed = RunConfig::from_toml(&text).unwrap();
    assert_eq!(parsed.arena.wez_radius_m, 4000.0);
    assert_eq!(parsed.arena.missile_range_m, 300.0);
    assert_eq!(parsed.arena.missile_fov_rad, PI / 4.0);
    assert_eq!(parsed.arena.wez_angle_rad, PI / 4.0);
    assert_eq!(parsed.train.clip_epsilon, 0.2);
    assert_eq!(parsed.train.gae_lambda, 0.95);
    assert_eq!(parsed.train.gamma, 0.99);
    assert_eq!(parsed.train.buffer_capacity, 3000);
    assert_eq!(parsed.train.lr, 3e-4);
    assert_eq!(parsed.dynamics.accel_max, 10.0);
    assert_eq!(parsed.dynamics.altitude_min, 3000.0);
    println!("ACCEPTANCE 6 (geometry Monte-Carlo suite + defaults file): PASS");
}

// ---------------------------------------------------------------------------
// 7. End-to-end training determinism.
// ---------------------------------------------------------------------------

#[test]
fn c07_end_to_end_determinism() {
    let start = std::time::Instant::now();
    let mut cfg = cfg_2v2(0xC7);
    cfg.train.iters = 5;
    cfg.train.checkpoint_every = 2;

    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let a = trainer::run_training(&cfg, dir_a.path(), None).unwrap();
    let b = trainer::run_training(&cfg, dir_b.path(), None).unwrap();

    let metrics_a = std::fs::read(&a.metrics_path).unwrap();
    let metrics_b = std::fs::read(&b.metrics_path).unwrap();
    assert_eq!(metrics_a, metrics_b, "metrics CSVs differ");
    assert_eq!(
        std::fs::read(&a.final_checkpoint).unwrap(),
        std::fs::read(&b.final_checkpoint).unwrap(),
        "final checkpoints differ"
    );
    for name in ["ckpt_00002.json", "ckpt_00004.json"] {
        assert_eq!(
            std::fs::read(dir_a.path().join("checkpoints").join(name)).unwrap(),
            std::fs::read(dir_b.path().join("checkpoints").join(name)).unwrap(),
            "{name} differs"
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 600.0);
    println!(
        "ACCEPTANCE 7 (bytewise determinism of 5-iteration runs): PASS ({:.1}s)",
        elapsed.as_secs_f64()
    );
}

// ---------------------------------------------------------------------------
// 8. Scaled learning trend: 2v2 vs scripted pure pursuit.
// ---------------------------------------------------------------------------

#[test]
fn c08_learning_trend_2v2() {
    let start = std::time::Instant::now();
    let iters = 200;
    let mut summaries = Vec::new();
    for seed in [11u64, 23, 37] {
        let cfg = cfg_2v2(seed);
        let (_, returns) = train_policy(&cfg, iters);
        let first: f64 = returns[..10].iter().sum::<f64>() / 10.0;
        let last: f64 = returns[iters - 10..].iter().sum::<f64>() / 10.0;
        summaries.push((seed, first, last));
        assert!(
            last > first,
            "seed {seed}: mean return did not improve ({first:.4} -> {last:.4})"
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 1800.0, "took {:.0}s", elapsed.as_secs_f64());
    for (seed, first, last) in &summaries {
        println!(
            "ACCEPTANCE 8 seed {seed}: first-10 mean return {first:.4}, last-10 {last:.4}"
        );
    }
    println!(
        "ACCEPTANCE 8 (2v2 learning trend, 3 seeds x {iters} iterations): PASS ({:.0}s)",
        elapsed.as_secs_f64()
    );
}

// ---------------------------------------------------------------------------
// 9. Scaled ablation trend: role-split vs pooled critics (soft criterion).
// ---------------------------------------------------------------------------

#[test]
fn c09_ablation_trend_soft() {
    let start = std::time::Instant::now();
    let iters = 200;
    let seeds = [11u64, 23, 37];
    let mut rates: std::collections::BTreeMap<&str, Vec<f64>> = Default::default();
    for (label, algo) in [("lfmappo", Algo::Lfmappo), ("mappo_no_lf", Algo::Mappo)] {
        for &seed in &seeds {
            let mut cfg = cfg_2v2(seed);
            cfg.train.algo = algo;
            let (bundle, _) = train_policy(&cfg, iters);
            let blue = TeamController::Learned { bundle: &bundle, deterministic: true };
            let red = TeamController::Scripted(ScriptedKind::PurePursuit);
            let (result, _) =
                evalharness::tournament(blue, red, &cfg, 128, 9_000 + seed, false).unwrap();
            println!(
                "ACCEPTANCE 9 raw: {label} seed {seed}: {} wins / {} draws / {} losses (win_rate {})",
                result.wins, result.draws, result.losses, result.win_rate
            );
            rates.entry(label).or_default().push(result.win_rate);
        }
    }
    let median = |xs: &mut Vec<f64>| -> f64 {
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        xs[xs.len() / 2]
    };
    let m_lf = median(rates.get_mut("lfmappo").unwrap());
    let m_ab = median(rates.get_mut("mappo_no_lf").unwrap());
    let elapsed = start.elapsed();
    println!(
        "ACCEPTANCE 9 medians: lfmappo {m_lf} vs mappo_no_lf {m_ab} ({:.0}s)",
        elapsed.as_secs_f64()
    );
    if m_lf >= m_ab {
        println!("ACCEPTANCE 9 (ablation ordering lfmappo >= mappo_no_lf): PASS");
    } else {
        // Expected-trend criterion: reported, not fatal.
        println!(
            "ACCEPTANCE 9 (ablation ordering lfmappo >= mappo_no_lf): FAIL (soft) — \
             raw numbers reported above"
        );
    }
}

// ---------------------------------------------------------------------------
// 10. Tournament protocol fidelity.
// ---------------------------------------------------------------------------

#[test]
fn c10_tournament_protocol() {
    let start = std::time::Instant::now();
    let mut cfg = cfg_2v2(0xC10);
    cfg.arena.t_limit_s = 90.0;
    let seeds = SeedTree::new(cfg.seed);
    let bundle = PolicyBundle::init(&cfg, &seeds);
    let blue = TeamController::Learned { bundle: &bundle, deterministic: true };

    // 128 combats per stage with randomized initial states.
    let red = TeamController::Scripted(ScriptedKind::PurePursuit);
    let (result, records) = evalharness::tournament(blue, red, &cfg, 128, 500, false).unwrap();
    assert_eq!(result.matches, 128);
    assert_eq!(result.wins + result.draws + result.losses, 128);
    assert_eq!(result.win_rate + result.draw_rate + result.loss_rate, 1.0);
    // Initial states differ across matches (seeded randomization).
    assert_eq!(records.len(), 128);
    let distinct_seeds: std::collections::BTreeSet<u64> =
        records.iter().map(|r| r.seed).collect();
    assert_eq!(distinct_seeds.len(), 128);

    // Mirrored deterministic self-play: every match is a draw.
    let red_self = TeamController::Learned { bundle: &bundle, deterministic: true };
    let (mirror, _) = evalharness::tournament(blue, red_self, &cfg, 128, 900, true).unwrap();
    assert_eq!(mirror.draw_rate, 1.0, "mirrored draws: {mirror:?}");
    assert_eq!(mirror.win_rate + mirror.draw_rate + mirror.loss_rate, 1.0);

    let elapsed = start.elapsed();
    println!(
        "ACCEPTANCE 10 (tournament protocol, 128 matches + mirrored draws): PASS ({:.0}s)",
        elapsed.as_secs_f64()
    );
}
