//! Post-training evaluation harnesses.
//!
//! All harnesses drive a read-only policy through independent episodes, so
//! trials fan out across threads (see [`crate::exec`]); each trial derives
//! its RNG from its index, which keeps results bit-identical regardless of
//! thread count or feature flags.

use thiserror::Error;

use crate::config::Config;
use crate::dqn::greedy_action;
use crate::env::{
    Action, Env, EnvError, EpisodeEvent, PedestrianMode, ScenarioKind, ScenarioParams, Side,
};
use crate::exec;
use crate::net::QNetwork;
use crate::seeds;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("v_test {0} km/h is not one of the test speeds 20, 25, ..., 60")]
    BadTestSpeed(f64),
}

/// A braking policy under evaluation.
pub trait Policy: Sync {
    fn action(&self, obs: &[f64]) -> Action;
}

/// Greedy policy of a trained Q-network.
pub struct GreedyPolicy<'a>(pub &'a QNetwork);

impl Policy for GreedyPolicy<'_> {
    fn action(&self, obs: &[f64]) -> Action {
        greedy_action(self.0, obs)
    }
}

/// Fixed-action stub policy, useful as a physical baseline.
pub struct ConstantPolicy(pub Action);

impl Policy for ConstantPolicy {
    fn action(&self, _obs: &[f64]) -> Action {
        self.0
    }
}

/// Summary of one evaluated episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub outcome: Option<EpisodeEvent>,
    pub steps: usize,
    pub ret: f64,
    pub v_init: f64,
    /// Pedestrian-minus-vehicle longitudinal distance at episode end.
    pub final_gap: f64,
    /// Vehicle speed at episode end (impact speed when the episode bumped).
    pub v_end: f64,
    pub ped_mode_end: PedestrianMode,
}

/// Run one episode under the policy. `outcome` is `None` only if the hard
/// step cap was reached.
pub fn rollout<P: Policy>(
    policy: &P,
    cfg: &Config,
    params: ScenarioParams,
    seed: u64,
) -> Result<Rollout, EnvError> {
    let (mut env, mut obs) = Env::reset(cfg, params, seed)?;
    let mut ret = 0.0;
    let mut outcome = None;
    for _ in 0..cfg.max_episode_steps {
        let action = policy.action(&obs);
        let step = env.step(action)?;
        ret += step.reward;
        obs = step.obs;
        if let Some(event) = step.event {
            outcome = Some(event);
            break;
        }
    }
    Ok(Rollout {
        outcome,
        steps: env.steps(),
        ret,
        v_init: params.v_init,
        final_gap: env.pedestrian().x - env.vehicle().x,
        v_end: env.vehicle().v,
        ped_mode_end: env.pedestrian().mode,
    })
}

fn uniform_in(rng: &mut rand_chacha::ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    use rand::Rng;
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// True when full braking applied exactly at the trigger instant stops the
/// vehicle before the safety line: `ttc * v >= v^2 / (2 a_max) + l`.
///
/// This formalizes physical avoidability: the distance from trigger to the
/// safety line is `ttc * v - l`, and the best any policy can do after the
/// trigger is the full-brake stopping distance `v^2 / (2 a_max)`.
pub fn min_brake_feasible(v: f64, ttc: f64, l: f64, a_max: f64) -> bool {
    debug_assert!(v > 0.0 && a_max > 0.0);
    ttc * v >= v * v / (2.0 * a_max) + l
}

/// Per-TTC outcome counts over a batch of crossing-scenario trials.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub ttc: f64,
    pub trials: usize,
    pub bumps: usize,
    pub stops: usize,
    pub passes: usize,
    pub crosses: usize,
    pub capped: usize,
    /// Trials whose sampled `v_init` fails [`min_brake_feasible`] at this TTC.
    pub infeasible: usize,
}

impl SweepResult {
    pub fn collision_rate(&self) -> f64 {
        self.bumps as f64 / self.trials as f64
    }

    pub fn infeasible_rate(&self) -> f64 {
        self.infeasible as f64 / self.trials as f64
    }
}

/// Collision-rate sweep: for each TTC, run `trials` crossing episodes with
/// `v_init`, `v_ped`, and side sampled as in training but the TTC held fixed.
pub fn ttc_sweep<P: Policy>(
    policy: &P,
    cfg: &Config,
    ttc_values: &[f64],
    trials: usize,
    seed: u64,
) -> Result<Vec<SweepResult>, EvalError> {
    let a_max = -cfg.a_high;
    let mut results = Vec::with_capacity(ttc_values.len());
    for (ttc_idx, &ttc) in ttc_values.iter().enumerate() {
        let stream = seeds::mix(seed, seeds::STREAM_EVAL, ttc_idx as u64);
        let outcomes = exec::map_trials(trials, |trial| {
            let mut rng = seeds::rng(stream, 0, trial as u64);
            let v_init = uniform_in(&mut rng, cfg.v_init_min, cfg.v_init_max);
            let v_ped = uniform_in(&mut rng, cfg.v_ped_min, cfg.v_ped_max);
            let side = {
                use rand::Rng;
                if rng.random_bool(0.5) {
                    Side::Near
                } else {
                    Side::Far
                }
            };
            let params = ScenarioParams::derive(v_init, ttc, v_ped, side, ScenarioKind::Cross, cfg);
            let env_seed = {
                use rand::Rng;
                rng.random::<u64>()
            };
            let roll = rollout(policy, cfg, params, env_seed)?;
            Ok::<_, EnvError>((roll.outcome, !min_brake_feasible(v_init, ttc, cfg.safety_line, a_max)))
        });
        let mut result = SweepResult {
            ttc,
            trials,
            bumps: 0,
            stops: 0,
            passes: 0,
            crosses: 0,
            capped: 0,
            infeasible: 0,
        };
        for outcome in outcomes {
            let (event, infeasible) = outcome?;
            match event {
                Some(EpisodeEvent::Bump) => result.bumps += 1,
                Some(EpisodeEvent::Stop) => result.stops += 1,
                Some(EpisodeEvent::Pass) => result.passes += 1,
                Some(EpisodeEvent::Cross) => result.crosses += 1,
                None => result.capped += 1,
            }
            if infeasible {
                result.infeasible += 1;
            }
        }
        results.push(result);
    }
    Ok(results)
}

/// Distribution of the vehicle-to-pedestrian gap over crossing episodes that
/// ended in a full stop.
#[derive(Debug, Clone, PartialEq)]
pub struct GapStats {
    pub trials: usize,
    /// Gaps of all Stop episodes, sorted ascending.
    pub gaps: Vec<f64>,
    /// Gaps of Stop episodes where the pedestrian was mid-crossing.
    pub mid_cross_gaps: Vec<f64>,
    /// 1 m histogram bins as (lower edge, count), covering all gaps.
    pub histogram: Vec<(f64, usize)>,
}

impl GapStats {
    pub fn stop_episodes(&self) -> usize {
        self.gaps.len()
    }

    pub fn min(&self) -> Option<f64> {
        self.gaps.first().copied()
    }

    pub fn max(&self) -> Option<f64> {
        self.gaps.last().copied()
    }

    /// Median of the sorted gaps; the mean of the middle two for even counts.
    pub fn median(&self) -> Option<f64> {
        let n = self.gaps.len();
        if n == 0 {
            return None;
        }
        Some(if n % 2 == 1 {
            self.gaps[n / 2]
        } else {
            (self.gaps[n / 2 - 1] + self.gaps[n / 2]) / 2.0
        })
    }
}

/// Run crossing-scenario episodes sampled as in training and collect the
/// stopping-gap distribution.
pub fn stopping_gap_stats<P: Policy>(
    policy: &P,
    cfg: &Config,
    trials: usize,
    seed: u64,
) -> Result<GapStats, EvalError> {
    let stream = seeds::mix(seed, seeds::STREAM_EVAL, 0xA11);
    let rolls = exec::map_trials(trials, |trial| {
        let mut rng = seeds::rng(stream, 0, trial as u64);
        let v_init = uniform_in(&mut rng, cfg.v_init_min, cfg.v_init_max);
        let v_ped = uniform_in(&mut rng, cfg.v_ped_min, cfg.v_ped_max);
        let ttc = uniform_in(&mut rng, cfg.ttc_min, cfg.ttc_max);
        let side = {
            use rand::Rng;
            if rng.random_bool(0.5) {
                Side::Near
            } else {
                Side::Far
            }
        };
        let params = ScenarioParams::derive(v_init, ttc, v_ped, side, ScenarioKind::Cross, cfg);
        let env_seed = {
            use rand::Rng;
            rng.random::<u64>()
        };
        rollout(policy, cfg, params, env_seed)
    });
    let mut gaps = Vec::new();
    let mut mid_cross_gaps = Vec::new();
    for roll in rolls {
        let roll = roll?;
        if roll.outcome == Some(EpisodeEvent::Stop) {
            gaps.push(roll.final_gap);
            if roll.ped_mode_end == PedestrianMode::Cross {
                mid_cross_gaps.push(roll.final_gap);
            }
        }
    }
    gaps.sort_by(|a, b| a.total_cmp(b));
    mid_cross_gaps.sort_by(|a, b| a.total_cmp(b));
    let histogram = build_histogram(&gaps);
    Ok(GapStats {
        trials,
        gaps,
        mid_cross_gaps,
        histogram,
    })
}

fn build_histogram(sorted_gaps: &[f64]) -> Vec<(f64, usize)> {
    if sorted_gaps.is_empty() {
        return Vec::new();
    }
    let lo = sorted_gaps[0].floor();
    let hi = sorted_gaps[sorted_gaps.len() - 1].floor();
    let mut bins = Vec::new();
    let mut edge = lo;
    while edge <= hi {
        let count = sorted_gaps
            .iter()
            .filter(|&&g| g >= edge && g < edge + 1.0)
            .count();
        bins.push((edge, count));
        edge += 1.0;
    }
    bins
}

/// One row of a trajectory trace. The first row records the initial state
/// with no action and zero reward.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub veh_x: f64,
    pub ped_x: f64,
    pub ped_y: f64,
    pub v: f64,
    pub action: Option<Action>,
    pub reward: f64,
}

/// Record a full episode trajectory at every time step.
pub fn trace_episode<P: Policy>(
    policy: &P,
    cfg: &Config,
    params: ScenarioParams,
    seed: u64,
) -> Result<Vec<TraceRow>, EnvError> {
    let (mut env, mut obs) = Env::reset(cfg, params, seed)?;
    let mut rows = vec![TraceRow {
        t: 0.0,
        veh_x: env.vehicle().x,
        ped_x: env.pedestrian().x,
        ped_y: env.pedestrian().y,
        v: env.vehicle().v,
        action: None,
        reward: 0.0,
    }];
    for step_idx in 0..cfg.max_episode_steps {
        let action = policy.action(&obs);
        let step = env.step(action)?;
        rows.push(TraceRow {
            t: (step_idx + 1) as f64 * params.dt,
            veh_x: env.vehicle().x,
            ped_x: env.pedestrian().x,
            ped_y: env.pedestrian().y,
            v: env.vehicle().v,
            action: Some(action),
            reward: step.reward,
        });
        obs = step.obs;
        if step.event.is_some() {
            break;
        }
    }
    Ok(rows)
}

/// The two pedestrian test geometries: adult crossing from the far side at
/// 8 km/h, or from the near side at 5 km/h.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NcapTest {
    Cvfa,
    Cvna,
}

impl std::fmt::Display for NcapTest {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NcapTest::Cvfa => write!(f, "CVFA"),
            NcapTest::Cvna => write!(f, "CVNA"),
        }
    }
}

/// Test speeds in km/h.
pub const NCAP_SPEEDS_KMH: [f64; 9] = [20.0, 25.0, 30.0, 35.0, 40.0, 45.0, 50.0, 55.0, 60.0];

const NCAP_POINTS: [f64; 9] = [1.0, 2.0, 2.0, 3.0, 3.0, 3.0, 2.0, 1.0, 1.0];

fn ncap_speed_index(v_test_kmh: f64) -> Result<usize, EvalError> {
    NCAP_SPEEDS_KMH
        .iter()
        .position(|&s| (s - v_test_kmh).abs() < 1e-9)
        .ok_or(EvalError::BadTestSpeed(v_test_kmh))
}

/// Points available at a given test speed.
pub fn ncap_points_available(v_test_kmh: f64) -> Result<f64, EvalError> {
    Ok(NCAP_POINTS[ncap_speed_index(v_test_kmh)?])
}

/// Result of one deterministic test case.
#[derive(Debug, Clone, PartialEq)]
pub struct NcapCase {
    pub test: NcapTest,
    pub v_test_kmh: f64,
    pub collided: bool,
    /// Impact speed in m/s; 0 when the collision was avoided.
    pub v_impact: f64,
    pub points_available: f64,
    pub points_awarded: f64,
}

/// Score a case: full points when the collision is avoided, otherwise a
/// speed-reduction credit `points * max(0, 1 - v_impact / v_test)`.
pub fn ncap_score(case: &NcapCase) -> f64 {
    if case.collided {
        let v_test_ms = case.v_test_kmh / 3.6;
        case.points_available * (1.0 - case.v_impact / v_test_ms).max(0.0)
    } else {
        case.points_available
    }
}

/// Run one deterministic test case: sensor noise off, TTC fixed at 4 s, the
/// pedestrian crossing at the test geometry's speed and side.
pub fn ncap_run<P: Policy>(
    policy: &P,
    cfg: &Config,
    test: NcapTest,
    v_test_kmh: f64,
) -> Result<NcapCase, EvalError> {
    let points_available = ncap_points_available(v_test_kmh)?;
    let mut quiet = cfg.clone();
    quiet.sigma_sensor = 0.0;
    let v_init = v_test_kmh / 3.6;
    let (v_ped, side) = match test {
        NcapTest::Cvfa => (8.0 / 3.6, Side::Far),
        NcapTest::Cvna => (5.0 / 3.6, Side::Near),
    };
    let params = ScenarioParams::derive(v_init, 4.0, v_ped, side, ScenarioKind::Cross, &quiet);
    let roll = rollout(policy, &quiet, params, 0)?;
    let collided = roll.outcome == Some(EpisodeEvent::Bump);
    let mut case = NcapCase {
        test,
        v_test_kmh,
        collided,
        v_impact: if collided { roll.v_end } else { 0.0 },
        points_available,
        points_awarded: 0.0,
    };
    case.points_awarded = ncap_score(&case);
    Ok(case)
}

/// All 18 cases: both tests at every speed.
pub fn ncap_suite<P: Policy>(policy: &P, cfg: &Config) -> Result<Vec<NcapCase>, EvalError> {
    let mut cases = Vec::with_capacity(2 * NCAP_SPEEDS_KMH.len());
    for test in [NcapTest::Cvfa, NcapTest::Cvna] {
        for v in NCAP_SPEEDS_KMH {
            cases.push(ncap_run(policy, cfg, test, v)?);
        }
    }
    Ok(cases)
}
