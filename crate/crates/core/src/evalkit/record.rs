use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use crate::envs::{EnvState, GoalEnv};
use crate::error::{Error, Result};
use crate::policy::GaussianPolicy;
use crate::rng::RngStream;
use crate::rollout::rollout_with;

pub const SCHEMA_VERSION: u32 = 1;

/// One line of `records.ndjson`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainRecord {
    pub schema_version: u32,
    pub algorithm: String,
    pub seed: u64,
    pub iteration: usize,
    pub train_timesteps: usize,
    pub oracle_timesteps: usize,
    /// Training plus oracle timesteps; the x-axis of learning curves.
    pub total_timesteps: usize,
    pub test_success: f64,
    pub per_state_success: Vec<f64>,
    /// Test-set indices the per-state values refer to.
    pub test_indices: Vec<usize>,
    pub good_starts_fraction: Option<f64>,
    pub wall_clock_s: Option<f64>,
}

impl TrainRecord {
    pub fn write_line<W: Write>(&self, mut out: W) -> Result<()> {
        serde_json::to_writer(&mut out, self)?;
        out.write_all(b"\n").map_err(|e| Error::Format(e.to_string()))
    }
}

/// Reads NDJSON records, rejecting unknown schema versions.
pub fn read_records<R: Read>(input: R) -> Result<Vec<TrainRecord>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(input).lines().enumerate() {
        let line = line.map_err(|e| Error::Format(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(&line)?;
        match value.get("schema_version").and_then(|v| v.as_u64()) {
            Some(v) if v == SCHEMA_VERSION as u64 => {}
            Some(v) => return Err(Error::Format(format!("record line {}: unknown schema version {v}", i + 1))),
            None => return Err(Error::Format(format!("record line {}: missing schema_version", i + 1))),
        }
        out.push(serde_json::from_value(value)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub mean: f64,
    pub per_state: Vec<f64>,
}

/// Success fraction from each state over `n_traj_per_state` rollouts.
pub fn evaluate_policy<E: GoalEnv>(
    env: &E,
    policy: &GaussianPolicy,
    states: &[EnvState],
    n_traj_per_state: usize,
    rng: &mut RngStream,
    deterministic: bool,
) -> Result<Evaluation> {
    if n_traj_per_state == 0 {
        return Err(Error::Config("n_traj_per_state must be at least 1".into()));
    }
    let mut env = env.clone();
    let mut per_state = Vec::with_capacity(states.len());
    for (i, s) in states.iter().enumerate() {
        let mut wins = 0;
        for _ in 0..n_traj_per_state {
            wins += rollout_with(&mut env, policy, i, s, rng, deterministic)?.success as usize;
        }
        per_state.push(wins as f64 / n_traj_per_state as f64);
    }
    let mean = if per_state.is_empty() {
        0.0
    } else {
        per_state.iter().sum::<f64>() / per_state.len() as f64
    };
    Ok(Evaluation { mean, per_state })
}
