//! Feed-forward network with tanh hidden layers and a linear output layer.
//!
//! Parameters live in one flat buffer. Layer `l` contributes its weight matrix
//! (row-major, `out x in`) followed by its bias vector, so the total count is
//! `sum(n_l * n_{l+1} + n_{l+1})`.

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::matrix::{dot, gemm, Matrix};
use super::params::FlatParams;
use crate::error::{ensure_len, Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpArch {
    sizes: Vec<usize>,
}

/// Per-layer outputs from a batched forward pass; `layers[0]` is the input.
#[derive(Debug, Clone)]
pub struct Activations {
    layers: Vec<Matrix>,
}

impl Activations {
    pub fn output(&self) -> &Matrix {
        self.layers.last().expect("at least the input layer")
    }

    pub fn input(&self) -> &Matrix {
        &self.layers[0]
    }

    pub fn into_output(mut self) -> Matrix {
        self.layers.pop().expect("at least the input layer")
    }
}

#[derive(Debug, Clone, Copy)]
struct LayerSpan {
    w: usize,
    b: usize,
    fan_in: usize,
    fan_out: usize,
}

impl MlpArch {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::Config("an MLP needs input and output sizes".into()));
        }
        if sizes.contains(&0) {
            return Err(Error::Config("MLP layer sizes must be positive".into()));
        }
        Ok(Self { sizes })
    }

    /// `input -> hidden... -> output`
    pub fn with_hidden(input: usize, hidden: &[usize], output: usize) -> Result<Self> {
        let mut sizes = Vec::with_capacity(hidden.len() + 2);
        sizes.push(input);
        sizes.extend_from_slice(hidden);
        sizes.push(output);
        Self::new(sizes)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("validated non-empty")
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn num_params(&self) -> usize {
        self.sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    fn spans(&self) -> Vec<LayerSpan> {
        let mut offset = 0;
        self.sizes
            .windows(2)
            .map(|w| {
                let span = LayerSpan {
                    w: offset,
                    b: offset + w[0] * w[1],
                    fan_in: w[0],
                    fan_out: w[1],
                };
                offset = span.b + w[1];
                span
            })
            .collect()
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut params = vec![0.0; self.num_params()];
        for span in self.spans() {
            let limit = (6.0 / (span.fan_in + span.fan_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit).expect("finite bounds");
            for w in &mut params[span.w..span.b] {
                *w = dist.sample(rng);
            }
        }
        params
    }

    /// Like [`init_params`](Self::init_params) but with the output layer zeroed,
    /// so the network initially predicts exactly zero.
    pub fn init_params_zero_output<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut params = self.init_params(rng);
        let last = *self.spans().last().expect("at least one layer");
        params[last.w..].iter_mut().for_each(|p| *p = 0.0);
        params
    }

    fn check_params(&self, params: &[f64]) -> Result<()> {
        ensure_len("MLP parameters", self.num_params(), params.len())
    }

    /// Single-sample forward pass.
    pub fn forward(&self, params: &[f64], input: &[f64]) -> Result<Vec<f64>> {
        self.check_params(params)?;
        ensure_len("MLP input", self.input_dim(), input.len())?;
        let spans = self.spans();
        let mut h = input.to_vec();
        for (l, span) in spans.iter().enumerate() {
            let w = &params[span.w..span.b];
            let b = &params[span.b..span.b + span.fan_out];
            let hidden = l + 1 < spans.len();
            let next: Vec<f64> = (0..span.fan_out)
                .map(|j| {
                    let z = dot(&w[j * span.fan_in..(j + 1) * span.fan_in], &h) + b[j];
                    if hidden {
                        z.tanh()
                    } else {
                        z
                    }
                })
                .collect();
            h = next;
        }
        Ok(h)
    }

    /// Gradient of `output_grad . f(input)` with respect to the parameters and the input.
    pub fn backward(
        &self,
        params: &[f64],
        input: &[f64],
        output_grad: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        ensure_len("MLP output gradient", self.output_dim(), output_grad.len())?;
        let x = Matrix::from_vec(1, input.len(), input.to_vec())?;
        let acts = self.forward_batch(params, &x)?;
        let g = Matrix::from_vec(1, output_grad.len(), output_grad.to_vec())?;
        let mut grad = vec![0.0; self.num_params()];
        let dx = self.backward_batch(params, &acts, &g, &mut grad)?;
        Ok((grad, dx.into_vec()))
    }

    pub fn forward_batch(&self, params: &[f64], input: &Matrix) -> Result<Activations> {
        self.check_params(params)?;
        ensure_len("MLP batch input", self.input_dim(), input.cols())?;
        let n = input.rows();
        let spans = self.spans();
        let mut layers = Vec::with_capacity(spans.len() + 1);
        layers.push(input.clone());
        for (l, span) in spans.iter().enumerate() {
            let mut z = Matrix::zeros(n, span.fan_out);
            let b = &params[span.b..span.b + span.fan_out];
            for i in 0..n {
                z.row_mut(i).copy_from_slice(b);
            }
            gemm(
                n,
                span.fan_in,
                span.fan_out,
                1.0,
                layers[l].data(),
                false,
                &params[span.w..span.b],
                true,
                1.0,
                z.data_mut(),
            );
            if l + 1 < spans.len() {
                z.data_mut().iter_mut().for_each(|v| *v = v.tanh());
            }
            layers.push(z);
        }
        Ok(Activations { layers })
    }

    /// Accumulates `d(sum_i grad_out_i . f(x_i)) / d(params)` into `grad_params`
    /// and returns the gradient with respect to the batch input.
    pub fn backward_batch(
        &self,
        params: &[f64],
        acts: &Activations,
        grad_out: &Matrix,
        grad_params: &mut [f64],
    ) -> Result<Matrix> {
        self.check_params(params)?;
        ensure_len("MLP parameter gradient", self.num_params(), grad_params.len())?;
        ensure_len("MLP batch output gradient", self.output_dim(), grad_out.cols())?;
        ensure_len("MLP batch rows", acts.input().rows(), grad_out.rows())?;
        let n = grad_out.rows();
        let spans = self.spans();
        let mut g = grad_out.clone();
        for (l, span) in spans.iter().enumerate().rev() {
            let h_in = &acts.layers[l];
            gemm(
                span.fan_out,
                n,
                span.fan_in,
                1.0,
                g.data(),
                true,
                h_in.data(),
                false,
                1.0,
                &mut grad_params[span.w..span.b],
            );
            let db = &mut grad_params[span.b..span.b + span.fan_out];
            for i in 0..n {
                for (d, v) in db.iter_mut().zip(g.row(i)) {
                    *d += v;
                }
            }
            let mut dh = Matrix::zeros(n, span.fan_in);
            gemm(
                n,
                span.fan_out,
                span.fan_in,
                1.0,
                g.data(),
                false,
                &params[span.w..span.b],
                false,
                0.0,
                dh.data_mut(),
            );
            if l > 0 {
                // h_in is a tanh output here.
                for (d, h) in dh.data_mut().iter_mut().zip(h_in.data()) {
                    *d *= 1.0 - h * h;
                }
            }
            g = dh;
        }
        Ok(g)
    }

    /// Forward-mode derivative of the batch outputs along a parameter direction.
    pub fn jvp_batch(&self, params: &[f64], acts: &Activations, tangent: &[f64]) -> Result<Matrix> {
        self.check_params(params)?;
        ensure_len("MLP tangent", self.num_params(), tangent.len())?;
        let n = acts.input().rows();
        let spans = self.spans();
        let mut t: Option<Matrix> = None;
        for (l, span) in spans.iter().enumerate() {
            let mut zdot = Matrix::zeros(n, span.fan_out);
            let db = &tangent[span.b..span.b + span.fan_out];
            for i in 0..n {
                zdot.row_mut(i).copy_from_slice(db);
            }
            gemm(
                n,
                span.fan_in,
                span.fan_out,
                1.0,
                acts.layers[l].data(),
                false,
                &tangent[span.w..span.b],
                true,
                1.0,
                zdot.data_mut(),
            );
            if let Some(prev) = &t {
                gemm(
                    n,
                    span.fan_in,
                    span.fan_out,
                    1.0,
                    prev.data(),
                    false,
                    &params[span.w..span.b],
                    true,
                    1.0,
                    zdot.data_mut(),
                );
            }
            if l + 1 < spans.len() {
                let h = &acts.layers[l + 1];
                for (d, hv) in zdot.data_mut().iter_mut().zip(h.data()) {
                    *d *= 1.0 - hv * hv;
                }
            }
            t = Some(zdot);
        }
        Ok(t.expect("at least one layer"))
    }
}

/// An architecture bundled with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    arch: MlpArch,
    params: FlatParams,
}

impl Mlp {
    pub fn new(arch: MlpArch, params: FlatParams) -> Result<Self> {
        ensure_len("Mlp::new", arch.num_params(), params.len())?;
        Ok(Self { arch, params })
    }

    pub fn random<R: Rng + ?Sized>(arch: MlpArch, rng: &mut R) -> Self {
        let params = FlatParams::new(arch.init_params(rng)).expect("glorot init is finite");
        Self { arch, params }
    }

    pub fn arch(&self) -> &MlpArch {
        &self.arch
    }

    pub fn params(&self) -> &FlatParams {
        &self.params
    }

    pub fn flatten(&self) -> FlatParams {
        self.params.clone()
    }

    pub fn unflatten(arch: MlpArch, params: FlatParams) -> Result<Self> {
        Self::new(arch, params)
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.arch.forward(self.params.as_slice(), input)
    }

    pub fn backward(&self, input: &[f64], output_grad: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.arch.backward(self.params.as_slice(), input, output_grad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn param_count_matches_layer_formula() {
        let arch = MlpArch::new(vec![4, 64, 64, 2]).unwrap();
        assert_eq!(arch.num_params(), 4 * 64 + 64 + 64 * 64 + 64 + 64 * 2 + 2);
    }

    #[test]
    fn zero_network_outputs_zero() {
        let arch = MlpArch::new(vec![3, 5, 2]).unwrap();
        let params = vec![0.0; arch.num_params()];
        assert_eq!(arch.forward(&params, &[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn single_affine_layer() {
        let arch = MlpArch::new(vec![1, 1]).unwrap();
        assert_eq!(arch.forward(&[2.0, 1.0], &[3.0]).unwrap(), vec![7.0]);
    }

    #[test]
    fn linear_layer_weight_gradient_is_input() {
        let arch = MlpArch::new(vec![3, 1]).unwrap();
        let params = [0.3, -0.1, 0.7, 0.2];
        let x = [1.5, -2.0, 0.25];
        let (g, dx) = arch.backward(&params, &x, &[1.0]).unwrap();
        assert_eq!(&g[..3], &x);
        assert_eq!(g[3], 1.0);
        assert_eq!(dx, vec![0.3, -0.1, 0.7]);
    }

    #[test]
    fn zero_output_grad_gives_zero_gradients() {
        let arch = MlpArch::new(vec![2, 8, 3]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let params = arch.init_params(&mut rng);
        let (g, dx) = arch.backward(&params, &[0.4, -0.3], &[0.0; 3]).unwrap();
        assert!(g.iter().chain(&dx).all(|&v| v == 0.0));
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let arch = MlpArch::new(vec![2, 3]).unwrap();
        let params = vec![0.0; arch.num_params()];
        assert!(arch.forward(&params, &[1.0]).is_err());
        assert!(arch.forward(&params[1..], &[1.0, 2.0]).is_err());
        assert!(arch.backward(&params, &[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn zero_output_init_predicts_zero() {
        let arch = MlpArch::new(vec![4, 32, 32, 1]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = arch.init_params_zero_output(&mut rng);
        assert_eq!(arch.forward(&params, &[0.1, 0.2, 0.3, 0.4]).unwrap(), vec![0.0]);
    }
}
