//! Reinforcement learning under random observation and action delays.
//!
//! The crate is `no_std` (it needs `alloc`) and contains only computation:
//!
//! - [`mdp`]: undelayed environments, tabular finite MDPs and trajectories.
//! - [`policy`]: tabular, constant and tanh-squashed Gaussian MLP policies.
//! - [`delay`]: random-delay augmentation (action buffer, delay processes,
//!   the variable-step update) and an event-driven channel simulation with
//!   timestamps, superseding and cumulative rewards.
//! - [`resampling`]: the validity condition and partial trajectory resampling.
//! - [`estimators`]: n-step (soft) state-value estimators and bias probes.
//! - [`oracle`]: exact enumeration on small augmented finite MDPs.
//! - [`nn`]: a small reverse-mode autodiff tape, MLPs, Adam and Polyak updates.
//! - [`agents`]: DCAC, SAC and RTAC trainers with a replay memory.
//! - [`envs`]: desk-scale benchmark environments.
//! - [`fixtures`]: small named problems for checks and tests.
//!
//! File formats, configuration and the command line live in the `dcac-cli`
//! companion crate.

#![no_std]

extern crate alloc;

pub mod agents;
pub mod delay;
pub mod envs;
pub mod error;
pub mod estimators;
pub mod fixtures;
pub mod mdp;
pub mod nn;
pub mod oracle;
pub mod policy;
pub mod resampling;
pub mod rng;

pub use error::{Error, Result};
