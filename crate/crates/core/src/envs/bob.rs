use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stand-in learner whose time to reach the goal is known in closed form: it
/// moves straight to the goal at `bob_speed` from anywhere within `bob_radius`,
/// and otherwise takes the maximal time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticBobWorld {
    pub goal: [f64; 2],
    pub bob_radius: f64,
    pub bob_speed: f64,
    /// `[x_min, x_max, y_min, y_max]`
    pub bounds: [f64; 4],
    pub t_max: f64,
}

impl SyntheticBobWorld {
    pub fn new(goal: [f64; 2], bob_radius: f64, bob_speed: f64, bounds: [f64; 4], t_max: f64) -> Result<Self> {
        if !(bob_radius >= 0.0) || !(bob_speed > 0.0) || !(t_max > 0.0) {
            return Err(Error::Config(format!(
                "bob_radius must be >= 0 and bob_speed, t_max > 0 (got {bob_radius}, {bob_speed}, {t_max})"
            )));
        }
        if bounds[0] >= bounds[1] || bounds[2] >= bounds[3] {
            return Err(Error::Config(format!("empty bounding box {bounds:?}")));
        }
        Ok(Self {
            goal,
            bob_radius,
            bob_speed,
            bounds,
            t_max,
        })
    }

    pub fn distance_to_goal(&self, p: [f64; 2]) -> f64 {
        (p[0] - self.goal[0]).hypot(p[1] - self.goal[1])
    }

    pub fn bob_time(&self, s0: [f64; 2]) -> f64 {
        let d = self.distance_to_goal(s0);
        if d <= self.bob_radius {
            d / self.bob_speed
        } else {
            self.t_max
        }
    }

    pub fn clamp_to_bounds(&self, p: [f64; 2]) -> [f64; 2] {
        [
            p[0].clamp(self.bounds[0], self.bounds[1]),
            p[1].clamp(self.bounds[2], self.bounds[3]),
        ]
    }
}
