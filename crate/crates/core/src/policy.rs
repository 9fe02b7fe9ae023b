//! Diagonal-Gaussian MLP policy with a state-independent log standard deviation.
//!
//! The flat parameter vector is the mean network's parameters followed by one
//! log-std entry per action dimension.

use std::f64::consts::PI;
use std::io::{Read, Write};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{ensure_len, Error, Result};
use crate::numerics::{FlatParams, Matrix, MlpArch};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

const CHECKPOINT_MAGIC: &[u8; 4] = b"RCPK";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicy {
    arch: MlpArch,
    params: Vec<f64>,
}

impl GaussianPolicy {
    /// Glorot-initialized mean network and `log_std = 0`.
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, hidden: &[usize], act_dim: usize, rng: &mut R) -> Result<Self> {
        let arch = MlpArch::with_hidden(obs_dim, hidden, act_dim)?;
        let mut params = arch.init_params(rng);
        params.extend(std::iter::repeat_n(0.0, act_dim));
        Ok(Self { arch, params })
    }

    pub fn from_params(arch: MlpArch, params: FlatParams) -> Result<Self> {
        let mut policy = Self {
            params: vec![0.0; arch.num_params() + arch.output_dim()],
            arch,
        };
        policy.set_params(params.as_slice())?;
        Ok(policy)
    }

    pub fn arch(&self) -> &MlpArch {
        &self.arch
    }

    pub fn obs_dim(&self) -> usize {
        self.arch.input_dim()
    }

    pub fn act_dim(&self) -> usize {
        self.arch.output_dim()
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn flat_params(&self) -> FlatParams {
        FlatParams::new(self.params.clone()).expect("policy parameters are kept finite")
    }

    /// Replaces all parameters; log-std entries are clamped to `[-5, 2]`.
    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        ensure_len("GaussianPolicy parameters", self.params.len(), params.len())?;
        if params.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("GaussianPolicy parameters"));
        }
        self.params.copy_from_slice(params);
        clamp_log_std(&self.arch, &mut self.params);
        Ok(())
    }

    pub fn mean_params(&self) -> &[f64] {
        &self.params[..self.arch.num_params()]
    }

    pub fn log_std(&self) -> &[f64] {
        &self.params[self.arch.num_params()..]
    }

    pub fn mean(&self, obs: &[f64]) -> Result<Vec<f64>> {
        if obs.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("policy observation"));
        }
        self.arch.forward(self.mean_params(), obs)
    }

    /// `mean(obs) + exp(log_std) * z` with `z ~ N(0, I)`. Not clipped.
    pub fn act<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        let mut a = self.mean(obs)?;
        for (ai, ls) in a.iter_mut().zip(self.log_std()) {
            let z: f64 = rng.sample(StandardNormal);
            *ai += ls.exp() * z;
        }
        Ok(a)
    }

    pub fn log_prob(&self, obs: &[f64], action: &[f64]) -> Result<f64> {
        ensure_len("policy action", self.act_dim(), action.len())?;
        let mu = self.mean(obs)?;
        Ok(diag_gaussian_log_prob(&mu, self.log_std(), action))
    }

    pub fn entropy(&self) -> f64 {
        diag_gaussian_entropy(self.log_std())
    }

    /// Mean `KL(self || other)` over a batch of observations.
    pub fn kl(&self, other: &GaussianPolicy, obs: &Matrix) -> Result<f64> {
        if self.arch != other.arch {
            return Err(Error::Config("KL between policies of different architectures".into()));
        }
        mean_kl(&self.arch, &self.params, &other.params, obs)
    }

    /// Checkpoint: `"RCPK"`, version, obs/act dims, layer sizes, then the flat parameter blob.
    pub fn write_checkpoint<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        out.write_all(CHECKPOINT_MAGIC)?;
        out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        out.write_all(&(self.obs_dim() as u32).to_le_bytes())?;
        out.write_all(&(self.act_dim() as u32).to_le_bytes())?;
        let sizes = self.arch.sizes();
        out.write_all(&(sizes.len() as u32).to_le_bytes())?;
        for &s in sizes {
            out.write_all(&(s as u32).to_le_bytes())?;
        }
        out.write_all(&self.flat_params().to_bytes())
    }

    pub fn read_checkpoint<R: Read>(mut input: R) -> Result<Self> {
        let mut bytes = Vec::new();
        input
            .read_to_end(&mut bytes)
            .map_err(|e| Error::Format(e.to_string()))?;
        let mut cursor = 0usize;
        let mut next_u32 = |what: &str| -> Result<u32> {
            let chunk = bytes
                .get(cursor..cursor + 4)
                .ok_or_else(|| Error::Format(format!("checkpoint truncated reading {what}")))?;
            cursor += 4;
            Ok(u32::from_le_bytes(chunk.try_into().expect("4 bytes")))
        };
        if bytes.get(..4) != Some(CHECKPOINT_MAGIC.as_slice()) {
            return Err(Error::Format("missing RCPK magic".into()));
        }
        next_u32("magic")?;
        let version = next_u32("version")?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let obs_dim = next_u32("obs_dim")? as usize;
        let act_dim = next_u32("act_dim")? as usize;
        let n = next_u32("layer count")? as usize;
        let sizes = (0..n)
            .map(|_| next_u32("layer size").map(|s| s as usize))
            .collect::<Result<Vec<_>>>()?;
        let arch = MlpArch::new(sizes)?;
        if arch.input_dim() != obs_dim || arch.output_dim() != act_dim {
            return Err(Error::Format("checkpoint header dims disagree with layer sizes".into()));
        }
        let header = 20 + 4 * n;
        let (params, _) = FlatParams::from_bytes(&bytes[header..])?;
        Self::from_params(arch, params)
    }
}

pub(crate) fn clamp_log_std(arch: &MlpArch, params: &mut [f64]) {
    for ls in &mut params[arch.num_params()..] {
        *ls = ls.clamp(LOG_STD_MIN, LOG_STD_MAX);
    }
}

pub fn diag_gaussian_log_prob(mean: &[f64], log_std: &[f64], action: &[f64]) -> f64 {
    let half_log_2pi = 0.5 * (2.0 * PI).ln();
    mean.iter()
        .zip(log_std)
        .zip(action)
        .map(|((m, ls), a)| {
            let z = (a - m) / ls.exp();
            -0.5 * z * z - ls - half_log_2pi
        })
        .sum()
}

pub fn diag_gaussian_entropy(log_std: &[f64]) -> f64 {
    let d = log_std.len() as f64;
    log_std.iter().sum::<f64>() + 0.5 * d * (1.0 + (2.0 * PI).ln())
}

/// `KL(N(mu1, s1) || N(mu2, s2))` for diagonal Gaussians given log-stds.
pub fn diag_gaussian_kl(mu1: &[f64], ls1: &[f64], mu2: &[f64], ls2: &[f64]) -> f64 {
    let mut kl = 0.0;
    for k in 0..mu1.len() {
        let var1 = (2.0 * ls1[k]).exp();
        let var2 = (2.0 * ls2[k]).exp();
        let dm = mu1[k] - mu2[k];
        kl += ls2[k] - ls1[k] + (var1 + dm * dm) / (2.0 * var2) - 0.5;
    }
    kl
}

fn split<'a>(arch: &MlpArch, params: &'a [f64]) -> (&'a [f64], &'a [f64]) {
    params.split_at(arch.num_params())
}

fn check_policy_params(arch: &MlpArch, params: &[f64]) -> Result<()> {
    ensure_len("policy parameters", arch.num_params() + arch.output_dim(), params.len())
}

/// Mean network outputs for a batch of observations.
pub fn batch_means(arch: &MlpArch, params: &[f64], obs: &Matrix) -> Result<Matrix> {
    check_policy_params(arch, params)?;
    let (mlp, _) = split(arch, params);
    Ok(arch.forward_batch(mlp, obs)?.into_output())
}

pub fn batch_log_probs(arch: &MlpArch, params: &[f64], obs: &Matrix, actions: &Matrix) -> Result<Vec<f64>> {
    ensure_len("batch actions", obs.rows(), actions.rows())?;
    let means = batch_means(arch, params, obs)?;
    let (_, log_std) = split(arch, params);
    Ok((0..obs.rows())
        .map(|i| diag_gaussian_log_prob(means.row(i), log_std, actions.row(i)))
        .collect())
}

/// Mean over the batch of `KL(pi_old(.|s) || pi_new(.|s))`.
pub fn mean_kl(arch: &MlpArch, old: &[f64], new: &[f64], obs: &Matrix) -> Result<f64> {
    let mu_old = batch_means(arch, old, obs)?;
    mean_kl_with_old_means(arch, &mu_old, split(arch, old).1, new, obs)
}

pub(crate) fn mean_kl_with_old_means(
    arch: &MlpArch,
    mu_old: &Matrix,
    ls_old: &[f64],
    new: &[f64],
    obs: &Matrix,
) -> Result<f64> {
    let n = obs.rows();
    if n == 0 {
        return Ok(0.0);
    }
    let mu_new = batch_means(arch, new, obs)?;
    let (_, ls_new) = split(arch, new);
    let total: f64 = (0..n)
        .map(|i| diag_gaussian_kl(mu_old.row(i), ls_old, mu_new.row(i), ls_new))
        .sum();
    Ok(total / n as f64)
}

/// Gradient of [`mean_kl`] with respect to the new parameters.
pub fn mean_kl_grad(arch: &MlpArch, old: &[f64], new: &[f64], obs: &Matrix) -> Result<Vec<f64>> {
    check_policy_params(arch, new)?;
    let n = obs.rows();
    let mut grad = vec![0.0; new.len()];
    if n == 0 {
        return Ok(grad);
    }
    let mu_old = batch_means(arch, old, obs)?;
    let (mlp_new, ls_new) = split(arch, new);
    let (_, ls_old) = split(arch, old);
    let acts = arch.forward_batch(mlp_new, obs)?;
    let mu_new = acts.output();
    let d = arch.output_dim();
    let inv_n = 1.0 / n as f64;
    let mut g_out = Matrix::zeros(n, d);
    let mut g_ls = vec![0.0; d];
    for i in 0..n {
        for k in 0..d {
            let var1 = (2.0 * ls_old[k]).exp();
            let var2 = (2.0 * ls_new[k]).exp();
            let dm = mu_new.get(i, k) - mu_old.get(i, k);
            g_out.set(i, k, dm / var2 * inv_n);
            g_ls[k] += (1.0 - (var1 + dm * dm) / var2) * inv_n;
        }
    }
    let split_at = arch.num_params();
    arch.backward_batch(mlp_new, &acts, &g_out, &mut grad[..split_at])?;
    grad[split_at..].copy_from_slice(&g_ls);
    Ok(grad)
}
