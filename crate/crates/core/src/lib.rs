//! Reverse curriculum generation for goal-oriented reinforcement learning.
//!
//! Start states are grown backwards from the goal with short random-action
//! rollouts, and the policy is trained with TRPO only on starts whose current
//! success rate is neither too low nor too high.

pub mod baselines;
pub mod curriculum;
pub mod envs;
pub mod evalkit;
pub mod error;
pub mod numerics;
pub mod policy;
pub mod rng;
pub mod rollout;
pub mod trpo;

pub use error::{Error, Result};
