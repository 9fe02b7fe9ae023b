//! Dense linear algebra, the MLP used by policies and baselines, and the CG solver.

pub mod cg;
pub mod matrix;
pub mod mlp;
pub mod optim;
pub mod params;

pub use cg::{cg_solve, cg_solve_observed, CgSolution};
pub use matrix::{axpy, dense_solve, dot, norm, Matrix};
pub use mlp::{Activations, Mlp, MlpArch};
pub use optim::Adam;
pub use params::FlatParams;
