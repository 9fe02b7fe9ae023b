//! Goal-oriented environments.
//!
//! Every environment here can be reset to an arbitrary feasible state, has a
//! goal ball around a known goal state, and is checked at construction that the
//! goal is reachable from every free region.

mod bob;
mod maze;

pub use bob::SyntheticBobWorld;
pub use maze::{MazeSpec, PointMassMaze, DEFAULT_MAZE, OPEN_MAZE};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::rng::RngStream;

/// Planar point-mass state: position in meters, velocity in m/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub pos: [f64; 2],
    pub vel: [f64; 2],
}

impl EnvState {
    pub fn at_rest(x: f64, y: f64) -> Self {
        Self {
            pos: [x, y],
            vel: [0.0, 0.0],
        }
    }

    /// Same position, zero velocity.
    pub fn at_rest_copy(&self) -> Self {
        Self::at_rest(self.pos[0], self.pos[1])
    }

    pub fn speed(&self) -> f64 {
        self.vel[0].hypot(self.vel[1])
    }

    pub fn distance_to(&self, point: [f64; 2]) -> f64 {
        (self.pos[0] - point[0]).hypot(self.pos[1] - point[1])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: EnvState,
    pub obs: Vec<f64>,
    /// 1 when the new state is inside the goal ball, 0 otherwise.
    pub reward: f64,
    pub done: bool,
}

/// Contract shared by environments used for curriculum training.
pub trait GoalEnv: Clone {
    fn obs_dim(&self) -> usize;
    fn act_dim(&self) -> usize;
    fn horizon(&self) -> usize;

    /// The provided goal state `s^g`.
    fn goal_state(&self) -> EnvState;

    fn is_feasible(&self, state: &EnvState) -> bool;
    fn is_goal(&self, state: &EnvState) -> bool;

    fn observe(&self, state: &EnvState) -> Vec<f64>;

    /// Deterministic one-step dynamics; does not touch episode bookkeeping.
    fn transition(&self, state: &EnvState, action: &[f64]) -> Result<EnvState>;

    /// Puts the environment in `state` and starts a new episode.
    fn reset_to(&mut self, state: &EnvState) -> Result<Vec<f64>>;

    fn step(&mut self, action: &[f64]) -> Result<StepOutcome>;

    fn state(&self) -> EnvState;

    /// Positions uniform over the feasible region, zero velocity.
    fn sample_uniform_feasible(&self, n: usize, rng: &mut RngStream) -> Vec<EnvState>;
}
