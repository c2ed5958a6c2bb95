//! Fixed-step kinematic simulation of a vehicle approaching a pedestrian.
//!
//! The vehicle drives along +x in a straight lane at y = 0. The pedestrian
//! stands on one curb (y = -curb for the near side, +curb for the far side)
//! and, in crossing scenarios, starts walking to the opposite curb on the
//! step the vehicle reaches the trigger point. An episode ends on the first
//! of four events: the vehicle stops, the vehicle enters the safety line
//! while the pedestrian is crossing (a collision), the vehicle passes the
//! pedestrian, or the pedestrian reaches the opposite curb.
//!
//! Each `Env` owns its RNG; instances are independent and can run on
//! separate threads without shared state.

use std::collections::VecDeque;
use std::fmt;

use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::config::Config;
use crate::reward::{reward, RewardParams};
use crate::seeds;

/// Seconds of travel at the initial speed between detection and the
/// pedestrian's position: the pedestrian is placed `5 * v_init` meters ahead.
pub const DETECTION_HORIZON_S: f64 = 5.0;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("step called on a terminated episode")]
    EpisodeTerminated,
}

/// Longitudinal vehicle state. Speed clamps at zero; the vehicle never
/// reverses, so `x` is non-decreasing over an episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    pub v: f64,
}

/// Behavioral mode of the pedestrian. Transitions only along
/// Nobody -> Stay, Stay -> Cross, Cross -> Crossed; Crossed is absorbing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PedestrianMode {
    Nobody,
    Stay,
    Cross,
    Crossed,
}

/// Which curb the pedestrian starts from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Near,
    Far,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Side::Near => write!(f, "near"),
            Side::Far => write!(f, "far"),
        }
    }
}

/// Whether the pedestrian will cross the road or stay on the curb.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    Cross,
    Stay,
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScenarioKind::Cross => write!(f, "cross"),
            ScenarioKind::Stay => write!(f, "stay"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PedestrianState {
    /// Longitudinal position; never changes within an episode.
    pub x: f64,
    pub y: f64,
    pub v_ped: f64,
    pub mode: PedestrianMode,
    pub side: Side,
}

/// Per-episode scenario. `ped_x` and `p_trig` are derived from `v_init` and
/// `ttc`; geometry and timing come from the configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioParams {
    pub v_init: f64,
    pub ttc: f64,
    pub side: Side,
    pub scenario: ScenarioKind,
    pub v_ped: f64,
    pub ped_x: f64,
    pub p_trig: f64,
    pub l: f64,
    pub dt: f64,
    pub curb: f64,
}

impl ScenarioParams {
    /// Build a scenario from its free parameters, deriving
    /// `ped_x = 5 * v_init` and `p_trig = (5 - ttc) * v_init`.
    pub fn derive(
        v_init: f64,
        ttc: f64,
        v_ped: f64,
        side: Side,
        scenario: ScenarioKind,
        cfg: &Config,
    ) -> ScenarioParams {
        ScenarioParams {
            v_init,
            ttc,
            side,
            scenario,
            v_ped,
            ped_x: DETECTION_HORIZON_S * v_init,
            p_trig: (DETECTION_HORIZON_S - ttc) * v_init,
            l: cfg.safety_line,
            dt: cfg.dt,
            curb: cfg.curb_offset,
        }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let checks = [
            (self.v_init > 0.0, "v_init must be > 0"),
            (self.v_ped > 0.0, "v_ped must be > 0"),
            (self.ttc > 0.0, "ttc must be > 0"),
            (self.dt > 0.0, "dt must be > 0"),
            (self.l >= 0.0, "safety line must be >= 0"),
            (self.curb > 0.0, "curb offset must be > 0"),
            (self.ped_x > 0.0, "ped_x must be > 0"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(EnvError::InvalidScenario(msg.to_string()));
            }
        }
        for (v, name) in [
            (self.v_init, "v_init"),
            (self.v_ped, "v_ped"),
            (self.ttc, "ttc"),
            (self.ped_x, "ped_x"),
            (self.p_trig, "p_trig"),
        ] {
            if !v.is_finite() {
                return Err(EnvError::InvalidScenario(format!("{name} must be finite")));
            }
        }
        Ok(())
    }
}

/// Brake actions in Q-output index order: strongest deceleration first.
/// The acceleration for index `i` is `Config::accels()[i]`
/// (defaults -9.8, -5.9, -2.9, 0 m/s^2).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    High,
    Mid,
    Low,
    Nothing,
}

impl Action {
    pub const ALL: [Action; 4] = [Action::High, Action::Mid, Action::Low, Action::Nothing];

    pub fn index(self) -> usize {
        match self {
            Action::High => 0,
            Action::Mid => 1,
            Action::Low => 2,
            Action::Nothing => 3,
        }
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Action::ALL.get(i).copied()
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::High => write!(f, "high"),
            Action::Mid => write!(f, "mid"),
            Action::Low => write!(f, "low"),
            Action::Nothing => write!(f, "nothing"),
        }
    }
}

/// Terminal episode events, in precedence order when several fire on the
/// same step: Bump > Stop > Cross > Pass. The collision must never be masked
/// by a simultaneous stop or pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpisodeEvent {
    Stop,
    Bump,
    Pass,
    Cross,
}

impl fmt::Display for EpisodeEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EpisodeEvent::Stop => write!(f, "stop"),
            EpisodeEvent::Bump => write!(f, "bump"),
            EpisodeEvent::Pass => write!(f, "pass"),
            EpisodeEvent::Cross => write!(f, "cross"),
        }
    }
}

/// Network input: the `history_frames` most recent sensor frames, oldest
/// first, each frame (vehicle speed, relative x, relative y) divided by the
/// configured normalization constants. Length is `3 * history_frames` (15
/// with defaults).
pub type Observation = Vec<f64>;

/// Advance the vehicle one step under constant acceleration.
///
/// The trapezoid displacement `(v + v') / 2 * dt` is exact for constant
/// acceleration. When braking would drive the speed below zero within the
/// step, the speed clamps to exactly 0.0 and the displacement is the exact
/// distance to standstill, `v^2 / (2 |a|)`.
pub fn update_vehicle(s: &VehicleState, accel: f64, dt: f64) -> VehicleState {
    let v_unclamped = s.v + accel * dt;
    if v_unclamped < 0.0 {
        // accel < 0 here since s.v >= 0.
        VehicleState {
            x: s.x + s.v * s.v / (2.0 * (-accel)),
            y: s.y,
            v: 0.0,
        }
    } else {
        VehicleState {
            x: s.x + (s.v + v_unclamped) / 2.0 * dt,
            y: s.y,
            v: v_unclamped,
        }
    }
}

/// Advance the pedestrian one step.
///
/// In crossing scenarios the pedestrian leaves the curb on the first step
/// where the vehicle has reached the trigger point, and walks toward the
/// opposite curb at `v_ped`; movement starts on the trigger step itself.
/// On reaching the opposite curb the position clamps there and the mode
/// becomes `Crossed`.
pub fn update_pedestrian(
    p: &PedestrianState,
    veh: &VehicleState,
    params: &ScenarioParams,
) -> PedestrianState {
    let mut next = *p;
    if next.mode == PedestrianMode::Stay
        && params.scenario == ScenarioKind::Cross
        && veh.x >= params.p_trig
    {
        next.mode = PedestrianMode::Cross;
    }
    if next.mode == PedestrianMode::Cross {
        let target = match next.side {
            Side::Near => params.curb,
            Side::Far => -params.curb,
        };
        if target > next.y {
            next.y += next.v_ped * params.dt;
            if next.y >= target {
                next.y = target;
                next.mode = PedestrianMode::Crossed;
            }
        } else {
            next.y -= next.v_ped * params.dt;
            if next.y <= target {
                next.y = target;
                next.mode = PedestrianMode::Crossed;
            }
        }
    }
    next
}

/// Classify the terminal event after a step, if any.
///
/// Because every event ends the episode, a pedestrian in `Crossed` mode can
/// only be seen on the step the crossing completed, so no previous-mode
/// bookkeeping is needed.
pub fn classify_event(
    veh: &VehicleState,
    ped: &PedestrianState,
    params: &ScenarioParams,
) -> Option<EpisodeEvent> {
    if ped.mode == PedestrianMode::Cross && veh.x >= ped.x - params.l {
        return Some(EpisodeEvent::Bump);
    }
    if veh.v == 0.0 {
        return Some(EpisodeEvent::Stop);
    }
    if ped.mode == PedestrianMode::Crossed {
        return Some(EpisodeEvent::Cross);
    }
    if veh.x > ped.x {
        return Some(EpisodeEvent::Pass);
    }
    None
}

/// Result of one environment step.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub obs: Observation,
    pub reward: f64,
    pub event: Option<EpisodeEvent>,
}

/// One episode's worth of simulation state.
pub struct Env {
    params: ScenarioParams,
    reward_params: RewardParams,
    accels: [f64; 4],
    sigma_sensor: f64,
    norm: [f64; 3],
    history: VecDeque<[f64; 3]>,
    history_frames: usize,
    veh: VehicleState,
    ped: PedestrianState,
    steps: usize,
    terminated: bool,
    rng: rand_chacha::ChaCha8Rng,
}

impl Env {
    /// Start an episode: vehicle at the origin at `v_init`, pedestrian on
    /// their curb in `Stay` mode, history filled with copies of the first
    /// sensor frame.
    pub fn reset(cfg: &Config, params: ScenarioParams, seed: u64) -> Result<(Env, Observation), EnvError> {
        params.validate()?;
        let ped_y = match params.side {
            Side::Near => -params.curb,
            Side::Far => params.curb,
        };
        let mut env = Env {
            params,
            reward_params: cfg.reward_params(),
            accels: cfg.accels(),
            sigma_sensor: cfg.sigma_sensor,
            norm: [cfg.norm_v, cfg.norm_x, cfg.norm_y],
            history: VecDeque::with_capacity(cfg.history_frames),
            history_frames: cfg.history_frames,
            veh: VehicleState {
                x: 0.0,
                y: 0.0,
                v: params.v_init,
            },
            ped: PedestrianState {
                x: params.ped_x,
                y: ped_y,
                v_ped: params.v_ped,
                mode: PedestrianMode::Stay,
                side: params.side,
            },
            steps: 0,
            terminated: false,
            rng: seeds::rng(seed, 0, 0),
        };
        let frame = env.noisy_frame();
        for _ in 0..env.history_frames {
            env.history.push_back(frame);
        }
        let obs = env.render_observation();
        Ok((env, obs))
    }

    /// Apply one action: move the vehicle, then the pedestrian, classify the
    /// event, compute the reward (from the noise-free relative distance at
    /// the step start), and push a fresh sensor frame.
    pub fn step(&mut self, a: Action) -> Result<StepOutcome, EnvError> {
        if self.terminated {
            return Err(EnvError::EpisodeTerminated);
        }
        let rel_x_true = self.ped.x - self.veh.x;
        let v_prev = self.veh.v;
        let accel = self.accels[a.index()];
        self.veh = update_vehicle(&self.veh, accel, self.params.dt);
        self.ped = update_pedestrian(&self.ped, &self.veh, &self.params);
        let event = classify_event(&self.veh, &self.ped, &self.params);
        let r = reward(
            rel_x_true,
            v_prev,
            self.veh.v,
            event == Some(EpisodeEvent::Bump),
            &self.reward_params,
        );
        let obs = self.observe();
        self.steps += 1;
        if event.is_some() {
            self.terminated = true;
        }
        Ok(StepOutcome {
            obs,
            reward: r,
            event,
        })
    }

    /// Push a fresh noisy frame into the ring and render the observation.
    pub fn observe(&mut self) -> Observation {
        let frame = self.noisy_frame();
        if self.history.len() == self.history_frames {
            self.history.pop_front();
        }
        self.history.push_back(frame);
        self.render_observation()
    }

    fn noisy_frame(&mut self) -> [f64; 3] {
        let mut frame = [
            self.veh.v,
            self.ped.x - self.veh.x,
            self.ped.y - self.veh.y,
        ];
        if self.sigma_sensor > 0.0 {
            let noise = Normal::new(0.0, self.sigma_sensor).expect("sigma_sensor >= 0");
            frame[1] += noise.sample(&mut self.rng);
            frame[2] += noise.sample(&mut self.rng);
        }
        frame
    }

    fn render_observation(&self) -> Observation {
        let mut out = Vec::with_capacity(3 * self.history_frames);
        for f in &self.history {
            out.push(f[0] / self.norm[0]);
            out.push(f[1] / self.norm[1]);
            out.push(f[2] / self.norm[2]);
        }
        out
    }

    pub fn vehicle(&self) -> &VehicleState {
        &self.veh
    }

    pub fn pedestrian(&self) -> &PedestrianState {
        &self.ped
    }

    pub fn params(&self) -> &ScenarioParams {
        &self.params
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn terminated(&self) -> bool {
        self.terminated
    }
}
