//! Cooperative two-agent reinforcement-learning benchmark built around learned
//! additive value decomposition: the joint action value is represented as a sum
//! of per-agent components trained end-to-end from the team reward.
//!
//! The crate is organised as a pipeline:
//!
//! * [`neuralcore`] — a minimal dense network engine (linear, ReLU, LSTM,
//!   dueling head, Adam) with hand-derived gradients and truncated BPTT.
//! * [`gridworld`] — a deterministic seeded grid engine for the Switch, Fetch
//!   and Checkers tasks with egocentric 3×5×5 byte observations.
//! * [`agents`] — the nine benchmark architectures (independent, value
//!   decomposition, weight sharing, role info, communication channels,
//!   centralized baselines) plus joint-Q composition and action selection.
//! * [`trainer`] — DQN-style loop: ε-greedy rollouts, replay of 8-step
//!   segments, target networks, forward-view λ-return targets, Adam.
//! * [`harness`] — multi-seed experiment orchestration, normalized AUC /
//!   final-performance metrics, CSV export and Q-decomposition traces.
//! * [`verify`] — self-contained property suites (gradient oracle, argmax
//!   equivalence, agent invariance, λ-return oracle, environment audit).

pub mod agents;
pub mod checkpoint;
pub mod config;
pub mod error;
pub mod gridworld;
pub mod harness;
pub mod neuralcore;
pub mod trainer;
pub mod util;
pub mod verify;

pub use error::VdnError;

/// Number of agents in every benchmark task.
pub const NUM_AGENTS: usize = 2;
/// Actions per agent (see [`gridworld::Action`]).
pub const NUM_ACTIONS: usize = 8;
/// Flattened observation length: 3 channels × 5 rows × 5 cols.
pub const OBS_LEN: usize = 75;
/// LSTM hidden width used by every architecture.
pub const HIDDEN: usize = 32;
