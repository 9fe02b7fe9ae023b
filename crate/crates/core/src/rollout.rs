//! Trajectory collection, returns, the value baseline, and per-start success counts.

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use crate::envs::{EnvState, GoalEnv};
use crate::error::{Error, Result};
use crate::numerics::{Adam, Matrix, MlpArch};
use crate::policy::GaussianPolicy;
use crate::rng::RngStream;

/// One episode. Observations and actions are stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Path {
    /// Index into the start list the batch was sampled from.
    pub start_id: usize,
    pub start: EnvState,
    pub obs: Vec<f64>,
    pub actions: Vec<f64>,
    pub rewards: Vec<f64>,
    pub success: bool,
}

impl Path {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub paths: Vec<Path>,
    pub total_timesteps: usize,
    pub starts: Vec<EnvState>,
    pub obs_dim: usize,
    pub act_dim: usize,
}

impl Batch {
    pub fn obs_matrix(&self) -> Matrix {
        let data: Vec<f64> = self.paths.iter().flat_map(|p| p.obs.iter().copied()).collect();
        Matrix::from_vec(self.total_timesteps, self.obs_dim, data).expect("path shapes are consistent")
    }

    pub fn action_matrix(&self) -> Matrix {
        let data: Vec<f64> = self.paths.iter().flat_map(|p| p.actions.iter().copied()).collect();
        Matrix::from_vec(self.total_timesteps, self.act_dim, data).expect("path shapes are consistent")
    }

    pub fn success_rate(&self) -> f64 {
        if self.paths.is_empty() {
            return 0.0;
        }
        self.paths.iter().filter(|p| p.success).count() as f64 / self.paths.len() as f64
    }

    /// One JSON object per path. Debugging aid; the layout may change.
    pub fn dump_ndjson<W: Write>(&self, mut out: W) -> Result<()> {
        for p in &self.paths {
            serde_json::to_writer(&mut out, p)?;
            out.write_all(b"\n").map_err(|e| Error::Format(e.to_string()))?;
        }
        Ok(())
    }
}

/// Runs one episode from `start` and returns it.
pub fn rollout<E: GoalEnv>(
    env: &mut E,
    policy: &GaussianPolicy,
    start_id: usize,
    start: &EnvState,
    rng: &mut RngStream,
) -> Result<Path> {
    rollout_with(env, policy, start_id, start, rng, false)
}

/// [`rollout`] that can act with the policy mean instead of sampling.
pub fn rollout_with<E: GoalEnv>(
    env: &mut E,
    policy: &GaussianPolicy,
    start_id: usize,
    start: &EnvState,
    rng: &mut RngStream,
    deterministic: bool,
) -> Result<Path> {
    let act = |obs: &[f64], rng: &mut RngStream| {
        if deterministic {
            policy.mean(obs)
        } else {
            policy.act(obs, rng)
        }
    };
    let horizon = env.horizon();
    let mut obs = env.reset_to(start)?;
    let mut path = Path {
        start_id,
        start: *start,
        obs: Vec::with_capacity(horizon * obs.len()),
        actions: Vec::with_capacity(horizon * env.act_dim()),
        rewards: Vec::with_capacity(horizon),
        success: false,
    };
    if env.is_goal(start) {
        // Starting inside the goal counts as reaching it at t = 0.
        let action = act(&obs, rng)?;
        path.obs.extend_from_slice(&obs);
        path.actions.extend_from_slice(&action);
        path.rewards.push(1.0);
        path.success = true;
        return Ok(path);
    }
    loop {
        let action = act(&obs, rng)?;
        let out = env.step(&action)?;
        path.obs.extend_from_slice(&obs);
        path.actions.extend_from_slice(&action);
        path.rewards.push(out.reward);
        if out.done {
            path.success = out.reward > 0.0;
            return Ok(path);
        }
        obs = out.obs;
    }
}

/// Samples starts uniformly and rolls out until at least `batch_timesteps`
/// steps have been collected.
pub fn collect_batch<E: GoalEnv>(
    env: &E,
    policy: &GaussianPolicy,
    starts: &[EnvState],
    batch_timesteps: usize,
    rng: &mut RngStream,
) -> Result<Batch> {
    if starts.is_empty() {
        return Err(Error::Config("collect_batch needs at least one start state".into()));
    }
    let mut env = env.clone();
    let mut paths = Vec::new();
    let mut total = 0;
    while total < batch_timesteps {
        let id = rng.random_range(0..starts.len());
        let path = rollout(&mut env, policy, id, &starts[id], rng)?;
        total += path.len();
        paths.push(path);
    }
    Ok(Batch {
        paths,
        total_timesteps: total,
        starts: starts.to_vec(),
        obs_dim: env.obs_dim(),
        act_dim: env.act_dim(),
    })
}

/// Rolls out exactly `n` episodes, starts drawn uniformly.
pub fn collect_episodes<E: GoalEnv>(
    env: &E,
    policy: &GaussianPolicy,
    starts: &[EnvState],
    n: usize,
    rng: &mut RngStream,
) -> Result<Vec<Path>> {
    if starts.is_empty() {
        return Err(Error::Config("collect_episodes needs at least one start state".into()));
    }
    let mut env = env.clone();
    (0..n)
        .map(|_| {
            let id = rng.random_range(0..starts.len());
            rollout(&mut env, policy, id, &starts[id], rng)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SuccessEstimate {
    pub successes: usize,
    pub visits: usize,
}

impl SuccessEstimate {
    pub fn fraction(&self) -> f64 {
        self.successes as f64 / self.visits as f64
    }

    pub fn merge(&mut self, other: SuccessEstimate) {
        self.successes += other.successes;
        self.visits += other.visits;
    }
}

/// Start-state id → pooled success counts. Unvisited starts are absent.
pub type SuccessMap = BTreeMap<usize, SuccessEstimate>;

pub fn success_estimates(batch: &Batch) -> SuccessMap {
    count_successes(&batch.paths)
}

pub fn count_successes(paths: &[Path]) -> SuccessMap {
    let mut map = SuccessMap::new();
    for p in paths {
        let e = map.entry(p.start_id).or_insert(SuccessEstimate {
            successes: 0,
            visits: 0,
        });
        e.visits += 1;
        e.successes += p.success as usize;
    }
    map
}

pub fn merge_success_maps(into: &mut SuccessMap, other: &SuccessMap) {
    for (&id, &e) in other {
        into.entry(id)
            .and_modify(|x| x.merge(e))
            .or_insert(e);
    }
}

/// `G_t = sum_k gamma^(k-t) r_k` for one path.
pub fn discounted_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for t in (0..rewards.len()).rev() {
        acc = rewards[t] + gamma * acc;
        out[t] = acc;
    }
    out
}

pub fn batch_returns(batch: &Batch, gamma: f64) -> Vec<f64> {
    batch
        .paths
        .iter()
        .flat_map(|p| discounted_returns(&p.rewards, gamma))
        .collect()
}

/// Shifts and scales to zero mean and unit (population) variance; leaves
/// constant inputs centered only.
pub fn normalize(values: &mut [f64]) {
    let n = values.len();
    if n == 0 {
        return;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    let scale = if var > 0.0 { 1.0 / var.sqrt() } else { 1.0 };
    for v in values.iter_mut() {
        *v = (*v - mean) * scale;
    }
}

/// Return-to-go minus the baseline prediction, normalized across the batch.
pub fn discounted_advantages(batch: &Batch, baseline: &ValueBaseline, gamma: f64) -> Result<Vec<f64>> {
    let mut adv = raw_advantages(batch, baseline, gamma)?;
    normalize(&mut adv);
    Ok(adv)
}

pub fn raw_advantages(batch: &Batch, baseline: &ValueBaseline, gamma: f64) -> Result<Vec<f64>> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::Config(format!("discount must be in (0, 1], got {gamma}")));
    }
    let returns = batch_returns(batch, gamma);
    let values = baseline.predict(&batch.obs_matrix())?;
    Ok(returns.iter().zip(&values).map(|(g, v)| g - v).collect())
}

/// MLP state-value regressor, warm-started across fits.
#[derive(Debug, Clone)]
pub struct ValueBaseline {
    arch: MlpArch,
    params: Vec<f64>,
    optimizer: Adam,
    pub steps: usize,
    /// Rows per gradient step; `None` uses the whole batch.
    pub minibatch: Option<usize>,
}

impl ValueBaseline {
    pub fn new<R: Rng + ?Sized>(
        obs_dim: usize,
        hidden: &[usize],
        learning_rate: f64,
        steps: usize,
        minibatch: Option<usize>,
        rng: &mut R,
    ) -> Result<Self> {
        let arch = MlpArch::with_hidden(obs_dim, hidden, 1)?;
        let params = arch.init_params_zero_output(rng);
        Ok(Self {
            optimizer: Adam::new(params.len(), learning_rate),
            arch,
            params,
            steps,
            minibatch,
        })
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn predict(&self, obs: &Matrix) -> Result<Vec<f64>> {
        Ok(self.arch.forward_batch(&self.params, obs)?.into_output().into_vec())
    }

    pub fn mse(&self, obs: &Matrix, targets: &[f64]) -> Result<f64> {
        let pred = self.predict(obs)?;
        Ok(pred.iter().zip(targets).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / targets.len().max(1) as f64)
    }

    /// Regresses predictions onto the discounted returns of `batch`.
    pub fn fit(&mut self, batch: &Batch, gamma: f64, rng: &mut RngStream) -> Result<()> {
        let targets = batch_returns(batch, gamma);
        self.fit_targets(&batch.obs_matrix(), &targets, rng)
    }

    pub fn fit_targets(&mut self, obs: &Matrix, targets: &[f64], rng: &mut RngStream) -> Result<()> {
        let n = obs.rows();
        if n == 0 {
            return Ok(());
        }
        let mut grad = vec![0.0; self.params.len()];
        let mut indices: Vec<usize> = (0..n).collect();
        for _ in 0..self.steps {
            let (x, y): (Matrix, Vec<f64>) = match self.minibatch {
                Some(m) if m < n => {
                    let (chosen, _) = indices.partial_shuffle(rng, m);
                    (obs.select_rows(chosen), chosen.iter().map(|&i| targets[i]).collect())
                }
                _ => (obs.clone(), targets.to_vec()),
            };
            let acts = self.arch.forward_batch(&self.params, &x)?;
            let rows = x.rows();
            let scale = 2.0 / rows as f64;
            let residual: Vec<f64> = acts
                .output()
                .data()
                .iter()
                .zip(&y)
                .map(|(p, t)| scale * (p - t))
                .collect();
            let g_out = Matrix::from_vec(rows, 1, residual)?;
            grad.iter_mut().for_each(|g| *g = 0.0);
            self.arch.backward_batch(&self.params, &acts, &g_out, &mut grad)?;
            self.optimizer.step(&mut self.params, &grad);
        }
        if self.params.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("value baseline parameters"));
        }
        Ok(())
    }
}
