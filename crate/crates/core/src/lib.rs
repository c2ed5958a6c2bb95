//! Autonomous emergency braking learned with a from-scratch deep Q-network.
//!
//! The crate simulates a vehicle approaching a pedestrian who may cross the
//! road, trains a braking policy with DQN plus a dedicated collision ("trauma")
//! replay memory, and evaluates the trained policy with a time-to-collision
//! sweep, stopping-distance statistics, and a simplified AEB pedestrian test
//! harness.
//!
//! Modules map onto the pipeline stages:
//!
//! - [`env`] — fixed-step kinematic simulation of vehicle and pedestrian
//! - [`reward`] — the shaped braking/collision reward
//! - [`net`] — fully-connected Q-network with hand-written backprop and RMSProp
//! - [`dqn`] — agent: action selection, replay/trauma memories, TD updates
//! - [`trainer`] — episode-level training loop and logging
//! - [`eval`] — post-training evaluation harnesses
//! - [`config`] — flat key = value configuration with validated defaults
//! - [`checkpoint`] — bit-exact binary persistence of network + optimizer
//! - [`report`] — CSV table rendering for all emitted results
//!
//! Evaluation episodes are independent and fan out across threads when the
//! `parallel` feature (default) is enabled; results are identical either way
//! because every trial derives its own RNG seed from the trial index.

pub mod checkpoint;
pub mod config;
pub mod dqn;
pub mod env;
pub mod eval;
pub mod exec;
pub mod net;
pub mod report;
pub mod reward;
pub mod seeds;
pub mod trainer;
