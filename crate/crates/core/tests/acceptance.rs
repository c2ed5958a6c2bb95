//! Acceptance suite: one test per criterion, each ending with a
//! `ACCEPTANCE <n> ...: PASS` line (visible with `--nocapture`).
//!
//! The trained-policy criteria share one full training run (and the ablation
//! criterion a second, trauma-off run) with the documented seed below, so
//! the suite performs three trainings in total including the reduced-scale
//! determinism pair.

use std::sync::OnceLock;

use rand::Rng;

use aeb_core::config::Config;
use aeb_core::dqn::{push_transition, sample_batch, ReplayMemory, Transition, TraumaMemory};
use aeb_core::env::{
    update_vehicle, Action, EpisodeEvent, ScenarioKind, ScenarioParams, Side, VehicleState,
};
use aeb_core::eval::{
    min_brake_feasible, ncap_suite, rollout, stopping_gap_stats, trace_episode, ttc_sweep,
    GreedyPolicy, SweepResult,
};
use aeb_core::net::QNetwork;
use aeb_core::report;
use aeb_core::reward::{reward, RewardParams};
use aeb_core::seeds;
use aeb_core::trainer::{self, trailing_moving_average, TrainOutput};

/// Documented acceptance seed for the trained-policy criteria.
const ACCEPTANCE_SEED: u64 = 7;
const TRAIN_EPISODES: usize = 3000;
const SWEEP_TRIALS: usize = 1000;

fn acceptance_config() -> Config {
    let mut cfg = Config::default();
    cfg.seed = ACCEPTANCE_SEED;
    cfg.episodes = TRAIN_EPISODES;
    cfg
}

fn trained() -> &'static TrainOutput {
    static TRAINED: OnceLock<TrainOutput> = OnceLock::new();
    TRAINED.get_or_init(|| trainer::train(&acceptance_config()).expect("training aborted"))
}

fn trained_without_trauma() -> &'static TrainOutput {
    static TRAINED_OFF: OnceLock<TrainOutput> = OnceLock::new();
    TRAINED_OFF.get_or_init(|| {
        let mut cfg = acceptance_config();
        cfg.trauma_enabled = false;
        trainer::train(&cfg).expect("training aborted")
    })
}

fn sweep() -> &'static Vec<SweepResult> {
    static SWEEP: OnceLock<Vec<SweepResult>> = OnceLock::new();
    SWEEP.get_or_init(|| {
        let cfg = acceptance_config();
        let ttcs: Vec<f64> = (0..16).map(|k| 0.9 + 0.2 * k as f64).collect();
        ttc_sweep(
            &GreedyPolicy(&trained().agent.net),
            &cfg,
            &ttcs,
            SWEEP_TRIALS,
            ACCEPTANCE_SEED,
        )
        .expect("sweep failed")
    })
}

// ---------------------------------------------------------------------------
// 1. Gradient correctness against central finite differences
// ---------------------------------------------------------------------------

fn fd_check_entry(
    net: &mut QNetwork,
    layer: usize,
    weight: bool,
    idx: usize,
    x: &[f64],
    og: &[f64],
    bp: f64,
) {
    const H: f64 = 1e-5;
    fn scalar_loss(net: &QNetwork, x: &[f64], og: &[f64]) -> f64 {
        net.forward(x).iter().zip(og).map(|(o, g)| o * g).sum()
    }
    let read = |net: &QNetwork| {
        if weight {
            net.layers[layer].w[idx]
        } else {
            net.layers[layer].b[idx]
        }
    };
    let orig = read(net);
    let write = |net: &mut QNetwork, v: f64| {
        if weight {
            net.layers[layer].w[idx] = v;
        } else {
            net.layers[layer].b[idx] = v;
        }
    };
    write(net, orig + H);
    let up = scalar_loss(net, x, og);
    write(net, orig - H);
    let down = scalar_loss(net, x, og);
    write(net, orig);
    let fd = (up - down) / (2.0 * H);
    assert!(
        (fd - bp).abs() <= 1e-5 * fd.abs().max(bp.abs()) + 1e-10,
        "layer {layer} {} [{idx}]: finite difference {fd} vs backprop {bp}",
        if weight { "w" } else { "b" },
    );
}

#[test]
fn criterion_01_gradient_correctness() {
    // 100 random (architecture, params, input, output-grad) draws, every
    // gradient entry checked exhaustively.
    let mut rng = seeds::rng(ACCEPTANCE_SEED, 101, 0);
    for draw in 0..100 {
        let n_layers = rng.random_range(2..=4usize);
        let mut sizes = vec![rng.random_range(2..=6usize)];
        for _ in 0..n_layers {
            sizes.push(rng.random_range(2..=7usize));
        }
        let mut net = QNetwork::init_he_uniform(&sizes, seeds::mix(9, 101, draw));
        let x: Vec<f64> = (0..sizes[0]).map(|_| rng.random_range(-1.5..1.5)).collect();
        let og: Vec<f64> = (0..*sizes.last().unwrap())
            .map(|_| rng.random_range(-2.0..2.0))
            .collect();
        let grads = net.backward(&x, &og);
        for layer in 0..net.layers.len() {
            for idx in 0..net.layers[layer].w.len() {
                let bp = grads.layers[layer].w[idx];
                fd_check_entry(&mut net, layer, true, idx, &x, &og, bp);
            }
            for idx in 0..net.layers[layer].b.len() {
                let bp = grads.layers[layer].b[idx];
                fd_check_entry(&mut net, layer, false, idx, &x, &og, bp);
            }
        }
    }
    // Full default architecture, a random sample of entries.
    let cfg = Config::default();
    let mut net = QNetwork::init_he_uniform(&cfg.layers, 1234);
    let x: Vec<f64> = (0..15).map(|_| rng.random_range(-1.0..1.0)).collect();
    let og: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
    let grads = net.backward(&x, &og);
    for _ in 0..500 {
        let layer = rng.random_range(0..net.layers.len());
        let weight = rng.random_bool(0.8);
        let idx = if weight {
            rng.random_range(0..net.layers[layer].w.len())
        } else {
            rng.random_range(0..net.layers[layer].b.len())
        };
        let bp = if weight {
            grads.layers[layer].w[idx]
        } else {
            grads.layers[layer].b[idx]
        };
        fd_check_entry(&mut net, layer, weight, idx, &x, &og, bp);
    }
    println!("ACCEPTANCE 1 (gradient correctness): PASS");
}

// ---------------------------------------------------------------------------
// 2. Reward oracle
// ---------------------------------------------------------------------------

#[test]
fn criterion_02_reward_oracle() {
    let p = RewardParams::default();
    // Worked values.
    assert_eq!(reward(50.0, 10.0, 10.0, false, &p), 0.0);
    assert!((reward(50.0, 10.0, 9.02, false, &p) - (-2.548)).abs() < 1e-12);
    assert!((reward(2.0, 10.0, 10.0, true, &p) - (-101.0)).abs() < 1e-12);
    // Independent evaluator, identical floating-point expression order.
    let oracle = |rel_x: f64, v_prev: f64, v_cur: f64, bumped: bool| -> f64 {
        -(p.alpha * rel_x * rel_x + p.beta) * (v_prev - v_cur)
            - if bumped { p.eta * v_cur * v_cur + p.lambda } else { 0.0 }
    };
    let mut rng = seeds::rng(ACCEPTANCE_SEED, 102, 0);
    for _ in 0..1000 {
        let rel_x: f64 = rng.random_range(-100.0..100.0);
        let v_prev: f64 = rng.random_range(0.0..17.0);
        let v_cur: f64 = rng.random_range(0.0..17.0f64.min(v_prev.max(1e-12)));
        let bumped = rng.random_bool(0.25);
        let got = reward(rel_x, v_prev, v_cur, bumped, &p);
        let want = oracle(rel_x, v_prev, v_cur, bumped);
        assert_eq!(got.to_bits(), want.to_bits(), "reward mismatch");
    }
    println!("ACCEPTANCE 2 (reward oracle): PASS");
}

// ---------------------------------------------------------------------------
// 3. Kinematics exactness
// ---------------------------------------------------------------------------

#[test]
fn criterion_03_kinematics_exactness() {
    let mut rng = seeds::rng(ACCEPTANCE_SEED, 103, 0);
    let dt = 0.1;
    for _ in 0..1000 {
        let v0: f64 = rng.random_range(0.5..17.0);
        let a: f64 = rng.random_range(-9.8..0.0);
        let steps_to_stop = ((v0 / -a) / dt).floor() as usize;
        if steps_to_stop < 1 {
            continue;
        }
        let k = rng.random_range(1..=steps_to_stop.min(200));
        let mut s = VehicleState { x: 0.0, y: 0.0, v: v0 };
        for _ in 0..k {
            s = update_vehicle(&s, a, dt);
        }
        let t = k as f64 * dt;
        assert!((s.x - (v0 * t + 0.5 * a * t * t)).abs() < 1e-9);
        assert!((s.v - (v0 + a * t)).abs() < 1e-9);
    }
    println!("ACCEPTANCE 3 (kinematics exactness): PASS");
}

// ---------------------------------------------------------------------------
// 4. Memory and batch properties
// ---------------------------------------------------------------------------

fn stub_transition(bump: bool, marker: f64) -> Transition {
    Transition {
        s: vec![0.0; 15],
        a: Action::Nothing,
        r: marker,
        s_next: vec![0.0; 15],
        terminal: bump,
        bump,
    }
}

#[test]
fn criterion_04_memory_and_batch_properties() {
    let cfg = Config::default();
    let hp = cfg.agent_hyperparams();
    let mut rng = seeds::rng(ACCEPTANCE_SEED, 104, 0);
    // 100k fuzzed pushes: the trauma memory only ever holds collisions.
    let mut replay = ReplayMemory::new(cfg.replay_capacity);
    let mut trauma = TraumaMemory::new(cfg.trauma_capacity);
    let mut expected_trauma = 0usize;
    for i in 0..100_000 {
        let bump = rng.random_bool(0.03);
        if bump {
            expected_trauma = (expected_trauma + 1).min(cfg.trauma_capacity);
        }
        push_transition(&mut replay, &mut trauma, stub_transition(bump, i as f64));
        assert_eq!(trauma.len(), expected_trauma);
        if i % 997 == 0 {
            assert!(trauma.iter().all(|t| t.bump));
        }
    }
    assert!(trauma.iter().all(|t| t.bump));
    assert!(replay.len() <= cfg.replay_capacity);
    // Batch composition: bump transitions pushed first get evicted from the
    // ring, leaving disjoint pools; a ready batch is exactly 32 + 10.
    let mut replay = ReplayMemory::new(cfg.replay_capacity);
    let mut trauma = TraumaMemory::new(cfg.trauma_capacity);
    for _ in 0..10 {
        push_transition(&mut replay, &mut trauma, stub_transition(true, -101.0));
    }
    for i in 0..cfg.replay_capacity {
        push_transition(&mut replay, &mut trauma, stub_transition(false, i as f64));
    }
    for _ in 0..100 {
        let batch = sample_batch(&replay, &mut trauma, &hp, &mut rng).expect("ready");
        assert_eq!(batch.len(), 42);
        assert_eq!(batch.iter().filter(|t| t.bump).count(), 10);
        assert_eq!(batch.iter().filter(|t| !t.bump).count(), 32);
    }
    println!("ACCEPTANCE 4 (memory/batch properties): PASS");
}

// ---------------------------------------------------------------------------
// 5. Trained-policy safety across the TTC sweep
// ---------------------------------------------------------------------------

#[test]
fn criterion_05_trained_policy_safety() {
    for r in sweep().iter() {
        let rate = r.collision_rate();
        if r.ttc >= 2.05 {
            assert_eq!(
                r.bumps, 0,
                "ttc {}: expected zero collisions, got {} of {}",
                r.ttc, r.bumps, r.trials
            );
        } else if r.ttc >= 1.45 {
            assert!(
                rate <= 0.01,
                "ttc {}: collision rate {rate} exceeds 1%",
                r.ttc
            );
        } else if r.ttc <= 1.15 {
            assert!(
                rate > 0.0,
                "ttc {}: expected strictly positive collision rate",
                r.ttc
            );
            assert!(
                rate >= r.infeasible_rate(),
                "ttc {}: rate {rate} below the physical lower bound {}",
                r.ttc,
                r.infeasible_rate()
            );
        }
    }
    println!("ACCEPTANCE 5 (trained-policy safety): PASS");
}

// ---------------------------------------------------------------------------
// 6. Feasibility-oracle consistency
// ---------------------------------------------------------------------------

#[test]
fn criterion_06_feasibility_oracle_consistency() {
    // Oracle hand values.
    assert!(!min_brake_feasible(16.67, 0.9, 3.0, 9.8));
    assert!(min_brake_feasible(16.67, 1.5, 3.0, 9.8));
    assert!(!min_brake_feasible(2.78, 0.9, 3.0, 9.8));
    for r in sweep().iter() {
        assert!(
            r.collision_rate() >= r.infeasible_rate(),
            "ttc {}: measured rate {} below infeasible fraction {}",
            r.ttc,
            r.collision_rate(),
            r.infeasible_rate()
        );
    }
    let shortest = &sweep()[0];
    assert!(shortest.ttc == 0.9);
    assert!(
        shortest.infeasible > 0,
        "the 0.9 s bound must be strictly positive"
    );
    println!("ACCEPTANCE 6 (feasibility-oracle consistency): PASS");
}

// ---------------------------------------------------------------------------
// 7. Scenario-2 liveness
// ---------------------------------------------------------------------------

#[test]
fn criterion_07_scenario2_liveness() {
    let cfg = acceptance_config();
    let policy = GreedyPolicy(&trained().agent.net);
    let trials = 1000;
    let stream = seeds::mix(ACCEPTANCE_SEED, 107, 0);
    let mut passes = 0;
    for trial in 0..trials {
        let mut rng = seeds::rng(stream, 0, trial as u64);
        let v_init = rng.random_range(cfg.v_init_min..cfg.v_init_max);
        let v_ped = rng.random_range(cfg.v_ped_min..cfg.v_ped_max);
        let ttc = rng.random_range(cfg.ttc_min..cfg.ttc_max);
        let side = if rng.random_bool(0.5) { Side::Near } else { Side::Far };
        let params = ScenarioParams::derive(v_init, ttc, v_ped, side, ScenarioKind::Stay, &cfg);
        let roll = rollout(&policy, &cfg, params, rng.random::<u64>()).unwrap();
        if roll.outcome == Some(EpisodeEvent::Pass) {
            passes += 1;
        }
    }
    assert!(
        passes * 100 >= trials * 99,
        "only {passes} of {trials} stay-scenario episodes passed"
    );
    println!("ACCEPTANCE 7 (scenario-2 liveness): PASS ({passes}/{trials} passes)");
}

// ---------------------------------------------------------------------------
// 8. Stopping-gap distribution
// ---------------------------------------------------------------------------

#[test]
fn criterion_08_stopping_gap() {
    let cfg = acceptance_config();
    let policy = GreedyPolicy(&trained().agent.net);
    let stats = stopping_gap_stats(&policy, &cfg, 2000, ACCEPTANCE_SEED).unwrap();
    assert!(stats.stop_episodes() > 0, "no stopping episodes observed");
    let median = stats.median().unwrap();
    assert!(
        (3.0..=8.0).contains(&median),
        "median stopping gap {median} outside [3, 8]"
    );
    // A stop that is not a collision always leaves the vehicle behind the
    // pedestrian, and behind the safety line while the crossing is underway.
    assert!(stats.gaps.iter().all(|&g| g > 0.0));
    assert!(stats.mid_cross_gaps.iter().all(|&g| g >= cfg.safety_line));
    println!(
        "ACCEPTANCE 8 (stopping gap): PASS (median {median:.2} m over {} stops)",
        stats.stop_episodes()
    );
}

// ---------------------------------------------------------------------------
// 9. Trauma-memory ablation
// ---------------------------------------------------------------------------

#[test]
fn criterion_09_trauma_ablation() {
    let cfg = acceptance_config();
    let window = 1000;
    let stats = |out: &TrainOutput| -> (f64, f64) {
        let returns: Vec<f64> = out.logs.iter().map(|l| l.ret).collect();
        let smoothed = trailing_moving_average(&returns, cfg.smoothing_window);
        let tail = &smoothed[smoothed.len() - window..];
        let mean = tail.iter().sum::<f64>() / window as f64;
        let var = tail.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / window as f64;
        (mean, var)
    };
    let on = trained();
    let off = trained_without_trauma();
    assert_eq!(off.agent.trauma.reads(), 0, "ablation must never read trauma");
    let (mean_on, var_on) = stats(on);
    let (mean_off, var_off) = stats(off);
    assert!(
        mean_on > mean_off,
        "smoothed return with trauma {mean_on} not above without {mean_off}"
    );
    assert!(
        var_on < var_off,
        "smoothed variance with trauma {var_on} not below without {var_off}"
    );
    println!(
        "ACCEPTANCE 9 (trauma ablation): PASS (mean {mean_on:.2} vs {mean_off:.2}, var {var_on:.4} vs {var_off:.4})"
    );
}

// ---------------------------------------------------------------------------
// 10. Pedestrian AEB test harness
// ---------------------------------------------------------------------------

#[test]
fn criterion_10_ncap_harness() {
    let cfg = acceptance_config();
    let policy = GreedyPolicy(&trained().agent.net);
    let cases = ncap_suite(&policy, &cfg).unwrap();
    assert_eq!(cases.len(), 18);
    let avoided = cases.iter().filter(|c| !c.collided).count();
    assert!(
        avoided >= 17,
        "only {avoided} of 18 test cases avoided a collision"
    );
    for case in cases.iter().filter(|c| !c.collided) {
        assert_eq!(
            case.points_awarded, case.points_available,
            "{} at {} km/h must award the full points row",
            case.test, case.v_test_kmh
        );
    }
    println!("ACCEPTANCE 10 (AEB test harness): PASS ({avoided}/18 avoided)");
}

// ---------------------------------------------------------------------------
// 11. End-to-end determinism
// ---------------------------------------------------------------------------

#[test]
fn criterion_11_determinism() {
    // Full train+eval pipeline at a reduced episode count (training is
    // active well before 300 episodes), run twice with one seed.
    let mut cfg = Config::default();
    cfg.seed = 21;
    cfg.episodes = 300;
    let run = || {
        let out = trainer::train(&cfg).expect("training aborted");
        let policy = GreedyPolicy(&out.agent.net);
        let sweep = ttc_sweep(&policy, &cfg, &[1.5, 2.5], 100, cfg.seed).unwrap();
        let ncap = ncap_suite(&policy, &cfg).unwrap();
        let params =
            ScenarioParams::derive(10.0, 1.5, 3.0, Side::Near, ScenarioKind::Cross, &cfg);
        let trace = trace_episode(&policy, &cfg, params, cfg.seed).unwrap();
        (
            report::episode_log_csv(&out.logs),
            report::sweep_csv(&sweep),
            report::ncap_csv(&ncap),
            report::trace_csv(&trace),
            out.agent.net,
        )
    };
    let (log_a, sweep_a, ncap_a, trace_a, net_a) = run();
    let (log_b, sweep_b, ncap_b, trace_b, net_b) = run();
    assert_eq!(log_a, log_b, "episode logs differ");
    assert_eq!(sweep_a, sweep_b, "sweep tables differ");
    assert_eq!(ncap_a, ncap_b, "test-suite tables differ");
    assert_eq!(trace_a, trace_b, "trace tables differ");
    assert_eq!(net_a, net_b, "trained parameters differ");
    println!("ACCEPTANCE 11 (determinism): PASS");
}

// ---------------------------------------------------------------------------
// Convergence direction of the main run (training example, kept with the
// acceptance suite because it shares the heavyweight fixture).
// ---------------------------------------------------------------------------

#[test]
fn trained_run_improves_over_training() {
    let logs = &trained().logs;
    let first: f64 = logs[..500].iter().map(|l| l.ret).sum::<f64>() / 500.0;
    let last: f64 = logs[logs.len() - 500..].iter().map(|l| l.ret).sum::<f64>() / 500.0;
    assert!(
        last > first,
        "mean return over final 500 episodes ({last}) not above the first 500 ({first})"
    );
    // No episode may hit the hard cap.
    assert!(logs.iter().all(|l| !l.capped()));
}
