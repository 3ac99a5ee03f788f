//! Tabular offline reinforcement learning model selection.
//!
//! This crate holds the pure algorithmic part of the laboratory: logged
//! trajectory data, ground-truth tabular simulators, offline learners,
//! off-policy estimators, dataset splitters and the selection strategies
//! that compare algorithm/hyperparameter pairs (AH pairs) on held-out data.
//!
//! The central pipeline is split-select-retrain: score every AH pair on
//! `K` repeated random train/validation partitions, pick the one with the
//! best mean validation estimate, and retrain it on the whole dataset.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the command
//! line front end and thread-parallel runners live in the `ssr` crate.
//!
//! # Determinism
//!
//! Every stochastic operation takes an [`RngSeed`]. Child streams are derived
//! from `(seed, tags...)` with [`RngSeed::derive`], so results never depend on
//! scheduling or on how work is split across threads.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod ah;
pub mod data;
pub mod envs;
pub mod math;
pub mod ope;
pub mod opl;
pub mod policy;
pub mod rng;
pub mod select;
pub mod theorem;

pub use ah::{AhSpec, Algorithm};
pub use data::{return_of, validate_dataset, Dataset, Step, Trajectory, ValidationReport};
pub use policy::{TabularPolicy, TabularQ};
pub use rng::RngSeed;
