//! DQN agent: epsilon-greedy action selection, replay and trauma memories,
//! target network, and the squared-TD-error training step.
//!
//! The trauma memory holds only collision transitions. Every training batch
//! draws a fixed number of samples from it (when available) in addition to
//! the replay draw, so rare collisions stay present in the training signal
//! no matter how good the current policy is.

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::config::Config;
use crate::env::{Action, Observation};
use crate::net::{QNetwork, RmsProp};
use crate::seeds;

/// One-step backup stored in the memories.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub s: Observation,
    pub a: Action,
    pub r: f64,
    pub s_next: Observation,
    pub terminal: bool,
    /// Collision on this step. Implies `terminal`.
    pub bump: bool,
}

#[derive(Debug, Error)]
#[error("replay memory below the minimum fill; no batch drawn")]
pub struct NotReady;

/// Ring buffer of recent transitions; the oldest is evicted first.
#[derive(Debug, Clone)]
pub struct ReplayMemory {
    buf: VecDeque<Transition>,
    capacity: usize,
}

impl ReplayMemory {
    pub fn new(capacity: usize) -> ReplayMemory {
        ReplayMemory {
            buf: VecDeque::with_capacity(capacity),
            capacity,
        }
    }

    pub fn push(&mut self, t: Transition) {
        if self.buf.len() == self.capacity {
            self.buf.pop_front();
        }
        self.buf.push_back(t);
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.buf.iter()
    }

    /// `n` uniform draws without replacement.
    pub fn sample(&self, n: usize, rng: &mut ChaCha8Rng) -> Vec<Transition> {
        debug_assert!(n <= self.buf.len());
        rand::seq::index::sample(rng, self.buf.len(), n)
            .into_iter()
            .map(|i| self.buf[i].clone())
            .collect()
    }
}

/// Ring buffer holding only collision transitions, with an instrumented read
/// counter so trauma-disabled runs can prove they never touched it.
#[derive(Debug, Clone)]
pub struct TraumaMemory {
    buf: VecDeque<Transition>,
    capacity: usize,
    reads: u64,
}

impl TraumaMemory {
    pub fn new(capacity: usize) -> TraumaMemory {
        TraumaMemory {
            buf: VecDeque::with_capacity(capacity),
            capacity,
            reads: 0,
        }
    }

    /// Store a collision transition. Non-collision transitions are a caller
    /// bug: the membership invariant is that every element has `bump` set.
    pub fn push(&mut self, t: Transition) {
        assert!(t.bump, "trauma memory only stores collision transitions");
        if self.buf.len() == self.capacity {
            self.buf.pop_front();
        }
        self.buf.push_back(t);
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.buf.iter()
    }

    /// Number of sampling calls made against this memory.
    pub fn reads(&self) -> u64 {
        self.reads
    }

    pub fn sample(&mut self, n: usize, rng: &mut ChaCha8Rng) -> Vec<Transition> {
        debug_assert!(n <= self.buf.len());
        self.reads += 1;
        rand::seq::index::sample(rng, self.buf.len(), n)
            .into_iter()
            .map(|i| self.buf[i].clone())
            .collect()
    }
}

/// Learning hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentHyperparams {
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay_episodes: usize,
    pub replay_batch: usize,
    pub trauma_batch: usize,
    pub target_sync_period: usize,
    pub min_replay_fill: usize,
}

impl AgentHyperparams {
    /// Exploration rate for a 0-based episode index: linear from
    /// `epsilon_start` to `epsilon_end` over the decay horizon, constant
    /// afterwards.
    pub fn epsilon_at(&self, episode: usize) -> f64 {
        if episode >= self.epsilon_decay_episodes {
            self.epsilon_end
        } else {
            let frac = episode as f64 / self.epsilon_decay_episodes as f64;
            self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
        }
    }
}

/// Greedy action: argmax of the Q-values, ties broken by the lowest index.
pub fn greedy_action(net: &QNetwork, obs: &[f64]) -> Action {
    let q = net.forward(obs);
    let mut best = 0;
    for (i, &v) in q.iter().enumerate() {
        if v > q[best] {
            best = i;
        }
    }
    Action::from_index(best).expect("network has one output per action")
}

/// Epsilon-greedy action. With probability `epsilon` a uniform random
/// action; otherwise the greedy one. `epsilon = 0` consumes no randomness.
pub fn select_action(net: &QNetwork, obs: &[f64], epsilon: f64, rng: &mut ChaCha8Rng) -> Action {
    debug_assert!((0.0..=1.0).contains(&epsilon));
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        Action::from_index(rng.random_range(0..Action::ALL.len())).unwrap()
    } else {
        greedy_action(net, obs)
    }
}

/// Append to the replay memory, and to the trauma memory as well when the
/// transition is a collision.
pub fn push_transition(replay: &mut ReplayMemory, trauma: &mut TraumaMemory, t: Transition) {
    if t.bump {
        trauma.push(t.clone());
    }
    replay.push(t);
}

/// Draw a training batch: `replay_batch` transitions from replay plus
/// `min(trauma_batch, trauma.len())` from trauma, all uniform without
/// replacement within each pool. Fails until the replay memory has reached
/// its minimum fill.
pub fn sample_batch(
    replay: &ReplayMemory,
    trauma: &mut TraumaMemory,
    hp: &AgentHyperparams,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Transition>, NotReady> {
    let mut batch = sample_replay_only(replay, hp, rng)?;
    let n_trauma = hp.trauma_batch.min(trauma.len());
    if n_trauma > 0 {
        batch.extend(trauma.sample(n_trauma, rng));
    }
    Ok(batch)
}

/// Replay-only variant used when the trauma memory is disabled.
pub fn sample_replay_only(
    replay: &ReplayMemory,
    hp: &AgentHyperparams,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Transition>, NotReady> {
    if replay.len() < hp.min_replay_fill {
        return Err(NotReady);
    }
    Ok(replay.sample(hp.replay_batch, rng))
}

/// Temporal-difference error of one transition. Terminal transitions do not
/// bootstrap from the next state.
pub fn td_error(t: &Transition, net: &QNetwork, target: &QNetwork, gamma: f64) -> f64 {
    let q_sa = net.forward(&t.s)[t.a.index()];
    if t.terminal {
        t.r - q_sa
    } else {
        let max_next = target
            .forward(&t.s_next)
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max);
        t.r + gamma * max_next - q_sa
    }
}

/// One gradient step on the summed squared TD error of the batch. Replay and
/// trauma samples are weighted identically. The loss gradient flows only
/// through the online network's value of the taken action; the target
/// network is read-only. Returns the batch loss.
pub fn train_step(
    net: &mut QNetwork,
    target: &QNetwork,
    batch: &[Transition],
    opt: &mut RmsProp,
    gamma: f64,
) -> f64 {
    assert!(!batch.is_empty(), "training batch must be nonempty");
    let mut grads = net.zeros_like();
    let mut out_grad = vec![0.0; net.output_len()];
    let mut loss = 0.0;
    for t in batch {
        let trace = net.forward_trace(&t.s);
        let q_sa = trace.output()[t.a.index()];
        let backup = if t.terminal {
            t.r
        } else {
            let max_next = target
                .forward(&t.s_next)
                .into_iter()
                .fold(f64::NEG_INFINITY, f64::max);
            t.r + gamma * max_next
        };
        let delta = backup - q_sa;
        loss += delta * delta;
        out_grad.fill(0.0);
        out_grad[t.a.index()] = -2.0 * delta;
        net.backward_into(&trace, &out_grad, &mut grads);
    }
    opt.step(net, &grads);
    loss
}

/// Deep copy of the online network for use as the bootstrap target.
pub fn sync_target(net: &QNetwork) -> QNetwork {
    net.clone()
}

/// The complete learner: networks, memories, optimizer, and exploration RNG.
pub struct Agent {
    pub net: QNetwork,
    pub target: QNetwork,
    pub replay: ReplayMemory,
    pub trauma: TraumaMemory,
    pub opt: RmsProp,
    pub hp: AgentHyperparams,
    pub trauma_enabled: bool,
    pub train_steps: u64,
    rng: ChaCha8Rng,
}

impl Agent {
    pub fn from_config(cfg: &Config) -> Agent {
        let net = QNetwork::init_he_uniform(&cfg.layers, seeds::mix(cfg.seed, seeds::STREAM_NET_INIT, 0));
        let target = sync_target(&net);
        let opt = RmsProp::new(cfg.learning_rate, cfg.rmsprop_rho, cfg.rmsprop_epsilon, &net);
        Agent {
            target,
            opt,
            replay: ReplayMemory::new(cfg.replay_capacity),
            trauma: TraumaMemory::new(cfg.trauma_capacity),
            hp: cfg.agent_hyperparams(),
            trauma_enabled: cfg.trauma_enabled,
            train_steps: 0,
            rng: seeds::rng(cfg.seed, seeds::STREAM_AGENT, 0),
            net,
        }
    }

    pub fn act(&mut self, obs: &[f64], epsilon: f64) -> Action {
        select_action(&self.net, obs, epsilon, &mut self.rng)
    }

    pub fn record(&mut self, t: Transition) {
        push_transition(&mut self.replay, &mut self.trauma, t);
    }

    /// Run one training step if the replay memory is ready; returns the batch
    /// loss. Syncs the target network every `target_sync_period` steps.
    pub fn learn(&mut self) -> Option<f64> {
        let batch = if self.trauma_enabled {
            sample_batch(&self.replay, &mut self.trauma, &self.hp, &mut self.rng)
        } else {
            sample_replay_only(&self.replay, &self.hp, &mut self.rng)
        };
        let batch = match batch {
            Ok(b) => b,
            Err(NotReady) => return None,
        };
        let loss = train_step(&mut self.net, &self.target, &batch, &mut self.opt, self.hp.gamma);
        self.train_steps += 1;
        if self.train_steps % self.hp.target_sync_period as u64 == 0 {
            self.target = sync_target(&self.net);
        }
        Some(loss)
    }
}
