//! Flat `key = value` configuration.
//!
//! Every tunable of the stack lives here under a named key with a documented
//! default. Parsing is strict: unknown keys, duplicate keys, and out-of-range
//! values are errors that name the offending key. Missing keys take defaults.
//!
//! The serialized form ([`Config::to_document`]) emits every key in a fixed
//! order using shortest round-trip float formatting, so
//! `parse_config(cfg.to_document()) == cfg` holds exactly. Checkpoints embed
//! this document verbatim.

use thiserror::Error;

use crate::dqn::AgentHyperparams;
use crate::reward::RewardParams;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("duplicate key `{0}`")]
    DuplicateKey(String),
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Malformed { line: usize, text: String },
    #[error("key `{key}`: cannot parse `{value}` as {expected}")]
    BadValue {
        key: String,
        value: String,
        expected: &'static str,
    },
    #[error("key `{key}`: {constraint}")]
    Constraint { key: &'static str, constraint: String },
}

/// Fully resolved configuration. Field order below is the emission order of
/// [`Config::to_document`].
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    // Scenario sampling bounds.
    pub v_init_min: f64,
    pub v_init_max: f64,
    pub v_ped_min: f64,
    pub v_ped_max: f64,
    pub ttc_min: f64,
    pub ttc_max: f64,
    // Brake action accelerations, m/s^2, in action-index order.
    pub a_high: f64,
    pub a_mid: f64,
    pub a_low: f64,
    pub a_nothing: f64,
    // Simulation geometry and timing.
    pub dt: f64,
    pub safety_line: f64,
    pub curb_offset: f64,
    pub max_episode_steps: usize,
    pub sigma_sensor: f64,
    // Observation normalization divisors.
    pub norm_v: f64,
    pub norm_x: f64,
    pub norm_y: f64,
    pub history_frames: usize,
    // Reward weights.
    pub alpha: f64,
    pub beta: f64,
    pub eta: f64,
    pub lambda: f64,
    // Network and optimizer.
    pub layers: Vec<usize>,
    pub learning_rate: f64,
    pub rmsprop_rho: f64,
    pub rmsprop_epsilon: f64,
    // Memories and batches.
    pub replay_capacity: usize,
    pub trauma_capacity: usize,
    pub replay_batch: usize,
    pub trauma_batch: usize,
    pub min_replay_fill: usize,
    // TD learning.
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay_episodes: usize,
    pub target_sync_period: usize,
    // Training run.
    pub episodes: usize,
    pub seed: u64,
    pub trauma_enabled: bool,
    pub smoothing_window: usize,
    /// Episodes between snapshot validations (0 disables snapshot selection
    /// and keeps the final parameters).
    pub validation_period: usize,
    /// First episode at which snapshot validation starts.
    pub validation_start: usize,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            v_init_min: 2.78,
            v_init_max: 16.67,
            v_ped_min: 2.0,
            v_ped_max: 4.0,
            ttc_min: 1.5,
            ttc_max: 4.0,
            a_high: -9.8,
            a_mid: -5.9,
            a_low: -2.9,
            a_nothing: 0.0,
            dt: 0.1,
            safety_line: 3.0,
            curb_offset: 3.5,
            max_episode_steps: 600,
            sigma_sensor: 0.1,
            norm_v: 16.67,
            norm_x: 100.0,
            norm_y: 10.0,
            history_frames: 5,
            alpha: 0.001,
            beta: 0.1,
            eta: 0.01,
            lambda: 100.0,
            layers: vec![15, 100, 70, 50, 70, 100, 4],
            learning_rate: 0.0005,
            rmsprop_rho: 0.9,
            rmsprop_epsilon: 1e-8,
            replay_capacity: 10_000,
            trauma_capacity: 1_000,
            replay_batch: 32,
            trauma_batch: 10,
            min_replay_fill: 500,
            gamma: 0.99,
            epsilon_start: 1.0,
            epsilon_end: 0.0,
            epsilon_decay_episodes: 1_500,
            target_sync_period: 500,
            episodes: 3_000,
            seed: 0,
            trauma_enabled: true,
            smoothing_window: 200,
            validation_period: 100,
            validation_start: 1_500,
        }
    }
}

macro_rules! emit {
    ($out:expr, $name:literal, $value:expr) => {
        $out.push_str(&format!(concat!($name, " = {}\n"), $value))
    };
}

impl Config {
    /// Brake accelerations in action-index order (High, Mid, Low, Nothing).
    pub fn accels(&self) -> [f64; 4] {
        [self.a_high, self.a_mid, self.a_low, self.a_nothing]
    }

    pub fn reward_params(&self) -> RewardParams {
        RewardParams {
            alpha: self.alpha,
            beta: self.beta,
            eta: self.eta,
            lambda: self.lambda,
        }
    }

    pub fn agent_hyperparams(&self) -> AgentHyperparams {
        AgentHyperparams {
            gamma: self.gamma,
            epsilon_start: self.epsilon_start,
            epsilon_end: self.epsilon_end,
            epsilon_decay_episodes: self.epsilon_decay_episodes,
            replay_batch: self.replay_batch,
            trauma_batch: self.trauma_batch,
            target_sync_period: self.target_sync_period,
            min_replay_fill: self.min_replay_fill,
        }
    }

    /// Serialize to the `key = value` document form. Floats use shortest
    /// round-trip formatting, so parsing the document reproduces the exact
    /// same configuration.
    pub fn to_document(&self) -> String {
        let mut s = String::new();
        emit!(s, "v_init_min", self.v_init_min);
        emit!(s, "v_init_max", self.v_init_max);
        emit!(s, "v_ped_min", self.v_ped_min);
        emit!(s, "v_ped_max", self.v_ped_max);
        emit!(s, "ttc_min", self.ttc_min);
        emit!(s, "ttc_max", self.ttc_max);
        emit!(s, "a_high", self.a_high);
        emit!(s, "a_mid", self.a_mid);
        emit!(s, "a_low", self.a_low);
        emit!(s, "a_nothing", self.a_nothing);
        emit!(s, "dt", self.dt);
        emit!(s, "safety_line", self.safety_line);
        emit!(s, "curb_offset", self.curb_offset);
        emit!(s, "max_episode_steps", self.max_episode_steps);
        emit!(s, "sigma_sensor", self.sigma_sensor);
        emit!(s, "norm_v", self.norm_v);
        emit!(s, "norm_x", self.norm_x);
        emit!(s, "norm_y", self.norm_y);
        emit!(s, "history_frames", self.history_frames);
        emit!(s, "alpha", self.alpha);
        emit!(s, "beta", self.beta);
        emit!(s, "eta", self.eta);
        emit!(s, "lambda", self.lambda);
        let layers: Vec<String> = self.layers.iter().map(|n| n.to_string()).collect();
        emit!(s, "layers", layers.join(","));
        emit!(s, "learning_rate", self.learning_rate);
        emit!(s, "rmsprop_rho", self.rmsprop_rho);
        emit!(s, "rmsprop_epsilon", self.rmsprop_epsilon);
        emit!(s, "replay_capacity", self.replay_capacity);
        emit!(s, "trauma_capacity", self.trauma_capacity);
        emit!(s, "replay_batch", self.replay_batch);
        emit!(s, "trauma_batch", self.trauma_batch);
        emit!(s, "min_replay_fill", self.min_replay_fill);
        emit!(s, "gamma", self.gamma);
        emit!(s, "epsilon_start", self.epsilon_start);
        emit!(s, "epsilon_end", self.epsilon_end);
        emit!(s, "epsilon_decay_episodes", self.epsilon_decay_episodes);
        emit!(s, "target_sync_period", self.target_sync_period);
        emit!(s, "episodes", self.episodes);
        emit!(s, "seed", self.seed);
        emit!(s, "trauma_enabled", self.trauma_enabled);
        emit!(s, "smoothing_window", self.smoothing_window);
        emit!(s, "validation_period", self.validation_period);
        emit!(s, "validation_start", self.validation_start);
        s
    }

    /// Check every cross-field constraint; errors name the key and rule.
    pub fn validate(&self) -> Result<(), ConfigError> {
        fn fail(key: &'static str, constraint: impl Into<String>) -> Result<(), ConfigError> {
            Err(ConfigError::Constraint {
                key,
                constraint: constraint.into(),
            })
        }
        if !(self.v_init_min > 0.0 && self.v_init_max >= self.v_init_min) {
            return fail("v_init_min", "need 0 < v_init_min <= v_init_max");
        }
        if !(self.v_ped_min > 0.0 && self.v_ped_max >= self.v_ped_min) {
            return fail("v_ped_min", "need 0 < v_ped_min <= v_ped_max");
        }
        if !(self.ttc_min > 0.0 && self.ttc_max >= self.ttc_min) {
            return fail("ttc_min", "need 0 < ttc_min <= ttc_max");
        }
        if !(self.dt > 0.0) {
            return fail("dt", "must be strictly positive");
        }
        if !(self.safety_line >= 0.0) {
            return fail("safety_line", "must be non-negative");
        }
        if !(self.curb_offset > 0.0) {
            return fail("curb_offset", "must be strictly positive");
        }
        if self.max_episode_steps == 0 {
            return fail("max_episode_steps", "must be at least 1");
        }
        if !(self.sigma_sensor >= 0.0) {
            return fail("sigma_sensor", "must be non-negative");
        }
        for (key, v) in [
            ("norm_v", self.norm_v),
            ("norm_x", self.norm_x),
            ("norm_y", self.norm_y),
        ] {
            if !(v > 0.0) {
                return Err(ConfigError::Constraint {
                    key: match key {
                        "norm_v" => "norm_v",
                        "norm_x" => "norm_x",
                        _ => "norm_y",
                    },
                    constraint: "must be strictly positive".into(),
                });
            }
        }
        for (key, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("eta", self.eta),
            ("lambda", self.lambda),
        ] {
            if !(v > 0.0) {
                return Err(ConfigError::Constraint {
                    key: match key {
                        "alpha" => "alpha",
                        "beta" => "beta",
                        "eta" => "eta",
                        _ => "lambda",
                    },
                    constraint: "reward weight must be strictly positive".into(),
                });
            }
        }
        if self.layers.len() < 2 {
            return fail("layers", "need at least input and output layer sizes");
        }
        if self.layers.iter().any(|&n| n == 0) {
            return fail("layers", "layer sizes must be non-zero");
        }
        if self.history_frames == 0 {
            return fail("history_frames", "must be at least 1");
        }
        if self.layers[0] != 3 * self.history_frames {
            return fail(
                "layers",
                format!(
                    "input layer must be 3 * history_frames = {}, got {}",
                    3 * self.history_frames,
                    self.layers[0]
                ),
            );
        }
        if *self.layers.last().unwrap() != 4 {
            return fail("layers", "output layer must have 4 nodes (one per action)");
        }
        if !(self.learning_rate > 0.0) {
            return fail("learning_rate", "must be strictly positive");
        }
        if !(self.rmsprop_rho > 0.0 && self.rmsprop_rho < 1.0) {
            return fail("rmsprop_rho", "must be in (0, 1)");
        }
        if !(self.rmsprop_epsilon > 0.0) {
            return fail("rmsprop_epsilon", "must be strictly positive");
        }
        if self.replay_capacity == 0 || self.trauma_capacity == 0 {
            return fail("replay_capacity", "memory capacities must be at least 1");
        }
        if self.replay_batch == 0 {
            return fail("replay_batch", "must be at least 1");
        }
        if self.min_replay_fill < self.replay_batch {
            return fail("min_replay_fill", "must be at least replay_batch");
        }
        if self.min_replay_fill > self.replay_capacity {
            return fail("min_replay_fill", "must not exceed replay_capacity");
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return fail("gamma", "must be in (0, 1)");
        }
        if !(0.0..=1.0).contains(&self.epsilon_start) {
            return fail("epsilon_start", "must be in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.epsilon_end) {
            return fail("epsilon_end", "must be in [0, 1]");
        }
        if self.epsilon_decay_episodes == 0 {
            return fail("epsilon_decay_episodes", "must be at least 1");
        }
        if self.target_sync_period == 0 {
            return fail("target_sync_period", "must be at least 1");
        }
        if self.smoothing_window == 0 {
            return fail("smoothing_window", "must be at least 1");
        }
        Ok(())
    }
}

fn parse_num<T: std::str::FromStr>(
    key: &str,
    value: &str,
    expected: &'static str,
) -> Result<T, ConfigError> {
    value.parse::<T>().map_err(|_| ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
        expected,
    })
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(ConfigError::BadValue {
            key: key.to_string(),
            value: value.to_string(),
            expected: "true or false",
        }),
    }
}

fn parse_layers(key: &str, value: &str) -> Result<Vec<usize>, ConfigError> {
    value
        .split(',')
        .map(|part| parse_num::<usize>(key, part.trim(), "comma-separated layer sizes"))
        .collect()
}

/// Parse a `key = value` document on top of the defaults and validate.
///
/// Lines are independent; blank lines and lines starting with `#` are
/// skipped. Each remaining line must be `key = value`. A key may appear at
/// most once.
pub fn parse_config(text: &str) -> Result<Config, ConfigError> {
    let mut cfg = Config::default();
    let mut seen: Vec<String> = Vec::new();
    for (line_no, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Malformed {
            line: line_no + 1,
            text: line.to_string(),
        })?;
        let key = key.trim();
        let value = value.trim();
        if seen.iter().any(|k| k == key) {
            return Err(ConfigError::DuplicateKey(key.to_string()));
        }
        seen.push(key.to_string());
        match key {
            "v_init_min" => cfg.v_init_min = parse_num(key, value, "a real number")?,
            "v_init_max" => cfg.v_init_max = parse_num(key, value, "a real number")?,
            "v_ped_min" => cfg.v_ped_min = parse_num(key, value, "a real number")?,
            "v_ped_max" => cfg.v_ped_max = parse_num(key, value, "a real number")?,
            "ttc_min" => cfg.ttc_min = parse_num(key, value, "a real number")?,
            "ttc_max" => cfg.ttc_max = parse_num(key, value, "a real number")?,
            "a_high" => cfg.a_high = parse_num(key, value, "a real number")?,
            "a_mid" => cfg.a_mid = parse_num(key, value, "a real number")?,
            "a_low" => cfg.a_low = parse_num(key, value, "a real number")?,
            "a_nothing" => cfg.a_nothing = parse_num(key, value, "a real number")?,
            "dt" => cfg.dt = parse_num(key, value, "a real number")?,
            "safety_line" => cfg.safety_line = parse_num(key, value, "a real number")?,
            "curb_offset" => cfg.curb_offset = parse_num(key, value, "a real number")?,
            "max_episode_steps" => cfg.max_episode_steps = parse_num(key, value, "an integer")?,
            "sigma_sensor" => cfg.sigma_sensor = parse_num(key, value, "a real number")?,
            "norm_v" => cfg.norm_v = parse_num(key, value, "a real number")?,
            "norm_x" => cfg.norm_x = parse_num(key, value, "a real number")?,
            "norm_y" => cfg.norm_y = parse_num(key, value, "a real number")?,
            "history_frames" => cfg.history_frames = parse_num(key, value, "an integer")?,
            "alpha" => cfg.alpha = parse_num(key, value, "a real number")?,
            "beta" => cfg.beta = parse_num(key, value, "a real number")?,
            "eta" => cfg.eta = parse_num(key, value, "a real number")?,
            "lambda" => cfg.lambda = parse_num(key, value, "a real number")?,
            "layers" => cfg.layers = parse_layers(key, value)?,
            "learning_rate" => cfg.learning_rate = parse_num(key, value, "a real number")?,
            "rmsprop_rho" => cfg.rmsprop_rho = parse_num(key, value, "a real number")?,
            "rmsprop_epsilon" => cfg.rmsprop_epsilon = parse_num(key, value, "a real number")?,
            "replay_capacity" => cfg.replay_capacity = parse_num(key, value, "an integer")?,
            "trauma_capacity" => cfg.trauma_capacity = parse_num(key, value, "an integer")?,
            "replay_batch" => cfg.replay_batch = parse_num(key, value, "an integer")?,
            "trauma_batch" => cfg.trauma_batch = parse_num(key, value, "an integer")?,
            "min_replay_fill" => cfg.min_replay_fill = parse_num(key, value, "an integer")?,
            "gamma" => cfg.gamma = parse_num(key, value, "a real number")?,
            "epsilon_start" => cfg.epsilon_start = parse_num(key, value, "a real number")?,
            "epsilon_end" => cfg.epsilon_end = parse_num(key, value, "a real number")?,
            "epsilon_decay_episodes" => {
                cfg.epsilon_decay_episodes = parse_num(key, value, "an integer")?
            }
            "target_sync_period" => cfg.target_sync_period = parse_num(key, value, "an integer")?,
            "episodes" => cfg.episodes = parse_num(key, value, "an integer")?,
            "seed" => cfg.seed = parse_num(key, value, "an unsigned integer")?,
            "trauma_enabled" => cfg.trauma_enabled = parse_bool(key, value)?,
            "smoothing_window" => cfg.smoothing_window = parse_num(key, value, "an integer")?,
            "validation_period" => cfg.validation_period = parse_num(key, value, "an integer")?,
            "validation_start" => cfg.validation_start = parse_num(key, value, "an integer")?,
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
    }
    cfg.validate()?;
    Ok(cfg)
}
