use super::matrix::{axpy, dot};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CgSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// `||b - A x||` of the returned iterate (recursive residual).
    pub residual_norm: f64,
    pub converged: bool,
}

/// Conjugate gradient for a symmetric positive definite operator.
///
/// Stops once `||r|| <= residual_tol * ||b||`; otherwise returns the iterate with
/// the smallest residual seen in `max_iters` iterations.
pub fn cg_solve<F>(apply_a: F, b: &[f64], max_iters: usize, residual_tol: f64) -> Result<CgSolution>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    cg_solve_observed(apply_a, b, max_iters, residual_tol, |_, _| {})
}

/// [`cg_solve`] that also hands every iterate `x_k` to `observe`.
pub fn cg_solve_observed<F, O>(
    mut apply_a: F,
    b: &[f64],
    max_iters: usize,
    residual_tol: f64,
    mut observe: O,
) -> Result<CgSolution>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
    O: FnMut(usize, &[f64]),
{
    let n = b.len();
    let b_norm = dot(b, b).sqrt();
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        return Ok(CgSolution {
            x,
            iterations: 0,
            residual_norm: 0.0,
            converged: true,
        });
    }
    let target = residual_tol * b_norm;
    let mut r = b.to_vec();
    let mut p = b.to_vec();
    let mut rr = dot(&r, &r);
    let mut best = (x.clone(), rr.sqrt());

    for iteration in 1..=max_iters {
        let ap = apply_a(&p)?;
        if ap.len() != n {
            return Err(Error::Shape {
                context: "cg_solve operator output",
                expected: n,
                actual: ap.len(),
            });
        }
        let pap = dot(&p, &ap);
        let alpha = rr / pap;
        if !alpha.is_finite() {
            return Err(Error::CgBreakdown { iteration });
        }
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        let rr_next = dot(&r, &r);
        if !rr_next.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::CgBreakdown { iteration });
        }
        observe(iteration, &x);
        let res = rr_next.sqrt();
        if res < best.1 {
            best = (x.clone(), res);
        }
        if res <= target {
            return Ok(CgSolution {
                x,
                iterations: iteration,
                residual_norm: res,
                converged: true,
            });
        }
        let beta = rr_next / rr;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
        rr = rr_next;
    }

    Ok(CgSolution {
        x: best.0,
        iterations: max_iters,
        residual_norm: best.1,
        converged: false,
    })
}
