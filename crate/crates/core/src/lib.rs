//! Tabular reinforcement learning with corruptible observations.
//!
//! The crate covers finite MDPs with an observation channel that can be
//! infected at a fixed step, a family of Bellman backup operators with a
//! non-expansion checker and fixed-point solver, rank-based and soft
//! exploration strategies, Q-learning / Sarsa(0) / Safe-Sarsa(0), interruption
//! schemes, and the safety analyses built on top of them.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`). The aliases
//! below fix the scalar to `f64`, which is what the harness uses.

pub mod backup;
pub mod environments;
pub mod error;
pub mod exploration;
pub mod interruption;
pub mod learning;
pub mod linalg;
pub mod mdp;
pub mod ranking;
pub mod rng;
pub mod safety;
pub mod scalar;
pub mod stats;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Mdp = mdp::TabularMdp<f64>;
pub type Channel = mdp::ObservationChannel<f64>;
pub type Operator = backup::BackupOperator<f64>;
pub type Strategy = exploration::ExplorationStrategy<f64>;
pub type Schedule = exploration::Schedule<f64>;
pub type Table = learning::QTable<f64>;
pub type Scheme = interruption::InterruptionScheme<f64>;

pub type Mdp32 = mdp::TabularMdp<f32>;
pub type Operator32 = backup::BackupOperator<f32>;
pub type Strategy32 = exploration::ExplorationStrategy<f32>;
pub type Table32 = learning::QTable<f32>;
