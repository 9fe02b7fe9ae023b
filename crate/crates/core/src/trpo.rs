//! Trust-region policy updates: surrogate objective, Fisher-vector products,
//! the conjugate-gradient direction, and the backtracking line search.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::envs::{EnvState, GoalEnv};
use crate::error::{ensure_len, Error, Result};
use crate::numerics::{axpy, cg_solve, dot, Matrix, MlpArch};
use crate::policy::{batch_means, clamp_log_std, diag_gaussian_log_prob, mean_kl_with_old_means, GaussianPolicy};
use crate::rng::RngStream;
use crate::rollout::{collect_batch, discounted_advantages, merge_success_maps, success_estimates, Batch, SuccessMap, ValueBaseline};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrpoConfig {
    pub step_kl: f64,
    pub cg_iters: usize,
    pub cg_damping: f64,
    pub backtrack_ratio: f64,
    pub max_backtracks: usize,
    pub inner_iters: usize,
    pub gamma: f64,
    /// Accepted steps satisfy `KL <= kl_slack * step_kl`.
    pub kl_slack: f64,
    pub train_log_std: bool,
    pub batch_timesteps: usize,
    /// Fisher-vector products use every `fvp_stride`-th observation.
    pub fvp_stride: usize,
}

impl Default for TrpoConfig {
    fn default() -> Self {
        Self {
            step_kl: 0.01,
            cg_iters: 10,
            cg_damping: 1e-2,
            backtrack_ratio: 0.8,
            max_backtracks: 15,
            inner_iters: 5,
            gamma: 0.998,
            kl_slack: 1.5,
            train_log_std: true,
            batch_timesteps: 10_000,
            fvp_stride: 1,
        }
    }
}

impl TrpoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if !(self.step_kl > 0.0) {
            return bad("step_kl must be positive");
        }
        if !(self.backtrack_ratio > 0.0 && self.backtrack_ratio < 1.0) {
            return bad("backtrack_ratio must be in (0, 1)");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must be in (0, 1]");
        }
        if !(self.cg_damping >= 0.0) || !(self.kl_slack >= 1.0) {
            return bad("cg_damping must be >= 0 and kl_slack >= 1");
        }
        if self.cg_iters == 0 || self.batch_timesteps == 0 || self.fvp_stride == 0 {
            return bad("cg_iters, batch_timesteps and fvp_stride must be positive");
        }
        Ok(())
    }
}

/// Everything about an on-policy batch that the update needs, evaluated once
/// at the old parameters.
#[derive(Debug, Clone)]
pub struct SurrogateProblem {
    arch: MlpArch,
    obs: Matrix,
    actions: Matrix,
    advantages: Vec<f64>,
    old_params: Vec<f64>,
    old_means: Matrix,
    old_log_probs: Vec<f64>,
    train_log_std: bool,
    fvp_obs: Matrix,
}

impl SurrogateProblem {
    pub fn new(
        arch: &MlpArch,
        params: &[f64],
        obs: Matrix,
        actions: Matrix,
        advantages: Vec<f64>,
        train_log_std: bool,
    ) -> Result<Self> {
        ensure_len("surrogate actions", obs.rows(), actions.rows())?;
        ensure_len("surrogate advantages", obs.rows(), advantages.len())?;
        if advantages.iter().any(|a| !a.is_finite()) {
            return Err(Error::NonFinite("advantages"));
        }
        let old_means = batch_means(arch, params, &obs)?;
        let log_std = &params[arch.num_params()..];
        let old_log_probs = (0..obs.rows())
            .map(|i| diag_gaussian_log_prob(old_means.row(i), log_std, actions.row(i)))
            .collect();
        let obs_for_fvp = obs.clone();
        Ok(Self {
            arch: arch.clone(),
            obs,
            actions,
            advantages,
            old_params: params.to_vec(),
            old_means,
            old_log_probs,
            train_log_std,
            fvp_obs: obs_for_fvp,
        })
    }

    /// Restricts Fisher-vector products to every `stride`-th observation.
    pub fn with_fvp_stride(mut self, stride: usize) -> Self {
        let rows: Vec<usize> = (0..self.obs.rows()).step_by(stride.max(1)).collect();
        self.fvp_obs = self.obs.select_rows(&rows);
        self
    }

    pub fn from_batch(policy: &GaussianPolicy, batch: &Batch, advantages: Vec<f64>, train_log_std: bool) -> Result<Self> {
        Self::new(
            policy.arch(),
            policy.params(),
            batch.obs_matrix(),
            batch.action_matrix(),
            advantages,
            train_log_std,
        )
    }

    pub fn len(&self) -> usize {
        self.obs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.rows() == 0
    }

    pub fn old_params(&self) -> &[f64] {
        &self.old_params
    }

    fn log_std_offset(&self) -> usize {
        self.arch.num_params()
    }

    /// `mean_i[ pi(a_i|s_i) / pi_old(a_i|s_i) * A_i ]`
    pub fn surrogate(&self, params: &[f64]) -> Result<f64> {
        let n = self.len();
        if n == 0 {
            return Ok(0.0);
        }
        let means = batch_means(&self.arch, params, &self.obs)?;
        let log_std = &params[self.log_std_offset()..];
        let total: f64 = (0..n)
            .map(|i| {
                let lp = diag_gaussian_log_prob(means.row(i), log_std, self.actions.row(i));
                (lp - self.old_log_probs[i]).exp() * self.advantages[i]
            })
            .sum();
        let value = total / n as f64;
        if value.is_finite() {
            Ok(value)
        } else {
            Err(Error::NonFinite("surrogate objective"))
        }
    }

    pub fn surrogate_and_grad(&self, params: &[f64]) -> Result<(f64, Vec<f64>)> {
        let n = self.len();
        let mut grad = vec![0.0; params.len()];
        if n == 0 {
            return Ok((0.0, grad));
        }
        let split = self.log_std_offset();
        let acts = self.arch.forward_batch(&params[..split], &self.obs)?;
        let means = acts.output();
        let log_std = &params[split..];
        let d = self.arch.output_dim();
        let inv_var: Vec<f64> = log_std.iter().map(|ls| (-2.0 * ls).exp()).collect();
        let mut g_out = Matrix::zeros(n, d);
        let mut total = 0.0;
        for i in 0..n {
            let a = self.actions.row(i);
            let mu = means.row(i);
            let lp = diag_gaussian_log_prob(mu, log_std, a);
            let w = (lp - self.old_log_probs[i]).exp() * self.advantages[i];
            total += w;
            let w = w / n as f64;
            for k in 0..d {
                let diff = a[k] - mu[k];
                g_out.set(i, k, w * diff * inv_var[k]);
                if self.train_log_std {
                    grad[split + k] += w * (diff * diff * inv_var[k] - 1.0);
                }
            }
        }
        self.arch.backward_batch(&params[..split], &acts, &g_out, &mut grad[..split])?;
        let value = total / n as f64;
        if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("surrogate gradient"));
        }
        Ok((value, grad))
    }

    /// Mean `KL(pi_old || pi_params)` over the batch observations.
    pub fn kl(&self, params: &[f64]) -> Result<f64> {
        mean_kl_with_old_means(
            &self.arch,
            &self.old_means,
            &self.old_params[self.log_std_offset()..],
            params,
            &self.obs,
        )
    }

    /// `(H + damping I) v` with `H` the Hessian of the mean KL at the old parameters.
    ///
    /// For diagonal Gaussians this Hessian is exactly `J^T diag(1/sigma^2) J / n`
    /// on the mean-network block and `2 I` on the log-std block.
    pub fn fisher_vector_product(&self, v: &[f64], damping: f64) -> Result<Vec<f64>> {
        ensure_len("Fisher-vector product input", self.old_params.len(), v.len())?;
        let n = self.fvp_obs.rows();
        let split = self.log_std_offset();
        let mut out = vec![0.0; v.len()];
        if n > 0 {
            let mlp = &self.old_params[..split];
            let acts = self.arch.forward_batch(mlp, &self.fvp_obs)?;
            let mut jv = self.arch.jvp_batch(mlp, &acts, &v[..split])?;
            let inv_var: Vec<f64> = self.old_params[split..]
                .iter()
                .map(|ls| (-2.0 * ls).exp() / n as f64)
                .collect();
            for i in 0..n {
                for (x, s) in jv.row_mut(i).iter_mut().zip(&inv_var) {
                    *x *= s;
                }
            }
            self.arch.backward_batch(mlp, &acts, &jv, &mut out[..split])?;
            for k in split..v.len() {
                out[k] = 2.0 * v[k];
            }
        }
        axpy(damping, v, &mut out);
        if out.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("Fisher-vector product"));
        }
        Ok(out)
    }
}

/// Free-function form of [`SurrogateProblem::surrogate_and_grad`] at the old parameters.
pub fn surrogate_and_grad(policy: &GaussianPolicy, batch: &Batch, advantages: &[f64]) -> Result<(f64, Vec<f64>)> {
    let problem = SurrogateProblem::from_batch(policy, batch, advantages.to_vec(), true)?;
    problem.surrogate_and_grad(policy.params())
}

pub fn fisher_vector_product(policy: &GaussianPolicy, obs: &Matrix, v: &[f64], damping: f64) -> Result<Vec<f64>> {
    let n = obs.rows();
    let actions = Matrix::zeros(n, policy.act_dim());
    let problem = SurrogateProblem::new(policy.arch(), policy.params(), obs.clone(), actions, vec![0.0; n], true)?;
    problem.fisher_vector_product(v, damping)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepInfo {
    pub accepted: bool,
    pub surrogate_before: f64,
    pub surrogate_after: f64,
    pub kl: f64,
    pub backtracks: usize,
    pub cg_iterations: usize,
    pub cg_residual: f64,
    pub warning: Option<String>,
}

/// One natural-gradient step with backtracking. Returns the new parameters
/// (equal to the old ones when no candidate is accepted).
pub fn trpo_step(problem: &SurrogateProblem, config: &TrpoConfig) -> Result<(Vec<f64>, StepInfo)> {
    let old = problem.old_params().to_vec();
    let (loss_before, grad) = problem.surrogate_and_grad(&old)?;
    let mut info = StepInfo {
        accepted: false,
        surrogate_before: loss_before,
        surrogate_after: loss_before,
        kl: 0.0,
        backtracks: 0,
        cg_iterations: 0,
        cg_residual: 0.0,
        warning: None,
    };
    if dot(&grad, &grad) == 0.0 {
        return Ok((old, info));
    }
    let damping = config.cg_damping;
    let solution = match cg_solve(|v| problem.fisher_vector_product(v, damping), &grad, config.cg_iters, 1e-10) {
        Ok(s) => s,
        Err(e) => {
            warn!("skipping policy update: {e}");
            info.warning = Some(e.to_string());
            return Ok((old, info));
        }
    };
    info.cg_iterations = solution.iterations;
    info.cg_residual = solution.residual_norm;
    let dir = solution.x;
    let shs = dot(&dir, &problem.fisher_vector_product(&dir, damping)?);
    if !(shs > 0.0) || !shs.is_finite() {
        let msg = format!("non-positive curvature along search direction ({shs})");
        warn!("skipping policy update: {msg}");
        info.warning = Some(msg);
        return Ok((old, info));
    }
    let beta = (2.0 * config.step_kl / shs).sqrt();
    let max_kl = config.kl_slack * config.step_kl;
    let mut frac = 1.0;
    for k in 0..config.max_backtracks {
        let mut candidate = old.clone();
        axpy(frac * beta, &dir, &mut candidate);
        clamp_log_std(&problem.arch, &mut candidate);
        let kl = problem.kl(&candidate)?;
        let loss = problem.surrogate(&candidate)?;
        if kl.is_finite() && kl <= max_kl && loss > loss_before {
            info.accepted = true;
            info.surrogate_after = loss;
            info.kl = kl;
            info.backtracks = k;
            return Ok((candidate, info));
        }
        frac *= config.backtrack_ratio;
    }
    info.backtracks = config.max_backtracks;
    Ok((old, info))
}

/// Per-inner-iteration training diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InnerDiagnostics {
    pub inner_iter: usize,
    pub timesteps: usize,
    pub paths: usize,
    pub mean_success: f64,
    pub entropy: f64,
    pub surrogate_before: f64,
    pub surrogate_after: f64,
    pub kl: f64,
    pub accepted: bool,
    pub backtracks: usize,
    pub cg_iterations: usize,
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainPolOutput {
    /// Success counts pooled over every batch collected in this call.
    pub rews: SuccessMap,
    pub timesteps: usize,
    pub diagnostics: Vec<InnerDiagnostics>,
}

/// Random streams used by [`train_pol`].
pub struct TrainStreams<'a> {
    pub rollout: &'a mut RngStream,
    pub baseline: &'a mut RngStream,
}

/// `inner_iters` rounds of collect, fit baseline, compute advantages, update.
/// With `inner_iters == 0` a single batch is collected and the policy is left alone.
pub fn train_pol<E: GoalEnv>(
    env: &E,
    policy: &mut GaussianPolicy,
    baseline: &mut ValueBaseline,
    starts: &[EnvState],
    config: &TrpoConfig,
    streams: TrainStreams<'_>,
) -> Result<TrainPolOutput> {
    config.validate()?;
    let mut out = TrainPolOutput {
        rews: SuccessMap::new(),
        timesteps: 0,
        diagnostics: Vec::new(),
    };
    if config.inner_iters == 0 {
        let batch = collect_batch(env, policy, starts, config.batch_timesteps, streams.rollout)?;
        out.timesteps = batch.total_timesteps;
        out.rews = success_estimates(&batch);
        return Ok(out);
    }
    for inner in 0..config.inner_iters {
        let batch = collect_batch(env, policy, starts, config.batch_timesteps, streams.rollout)?;
        out.timesteps += batch.total_timesteps;
        merge_success_maps(&mut out.rews, &success_estimates(&batch));
        baseline.fit(&batch, config.gamma, streams.baseline)?;
        let adv = discounted_advantages(&batch, baseline, config.gamma)?;
        let problem =
            SurrogateProblem::from_batch(policy, &batch, adv, config.train_log_std)?.with_fvp_stride(config.fvp_stride);
        let (params, info) = trpo_step(&problem, config)?;
        policy.set_params(&params)?;
        out.diagnostics.push(InnerDiagnostics {
            inner_iter: inner,
            timesteps: batch.total_timesteps,
            paths: batch.paths.len(),
            mean_success: batch.success_rate(),
            entropy: policy.entropy(),
            surrogate_before: info.surrogate_before,
            surrogate_after: info.surrogate_after,
            kl: info.kl,
            accepted: info.accepted,
            backtracks: info.backtracks,
            cg_iterations: info.cg_iterations,
            warning: info.warning,
        });
    }
    Ok(out)
}
