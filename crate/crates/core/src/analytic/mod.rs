//! Analytic predictions: the Laplace-transformed reproduction kernel, its
//! Perron root and eigenvectors, the Malthusian parameter, and the limiting
//! composition and degree laws built on top of them.

mod degree;
mod kernel;
mod malthusian;
mod perron;

pub use degree::{
    degree_law_table, degree_limit_recursion, degree_limit_total, degree_limit_total_seq, marginal_child_exponent,
    marginal_child_law, tail_constant, tail_exponent, DegreeLawTable, LatticeBounds, LatticeTable, MarginalLaw,
    TailDescriptor,
};
pub use kernel::{
    laplace_kernel, laplace_kernel_closed, laplace_kernel_lattice, laplace_kernel_separable, laplace_kernel_series,
    KernelMatrix, KernelOptions, MAX_LATTICE_CELLS,
};
pub use malthusian::{composition_limit, malthusian, MalthusianOptions, MalthusianSolution};
pub use perron::{perron, PerronOptions, PerronResult};

use thiserror::Error;

use crate::rates::RateError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticError {
    #[error(transparent)]
    Rate(#[from] RateError),
    #[error("theta must be positive and finite, got {0}")]
    BadTheta(f64),
    #[error("{0}")]
    NotApplicable(&'static str),
    #[error("kernel divergent at theta = {theta}")]
    KernelDivergent { theta: f64 },
    #[error("matrix entry ({i}, {j}) = {value} is not strictly positive")]
    NotPositive { i: usize, j: usize, value: f64 },
    #[error("power iteration did not converge within {iterations} iterations")]
    PerronNoConvergence { iterations: usize },
    #[error("kernel series for row {row} undecided after {terms} terms (partial sum {partial_sum})")]
    SeriesUndecided { row: usize, terms: usize, partial_sum: f64 },
    #[error("lattice of {cells} cells exceeds the limit of {limit}")]
    LatticeTooLarge { cells: usize, limit: usize },
    #[error("lattice truncation leaves residual mass {residual} in row {row}, above tolerance {tol}")]
    LatticeUnresolved { row: usize, residual: f64, tol: f64 },
    #[error("no Malthusian parameter: {0}")]
    NoMalthusian(String),
    #[error("Perron root at alpha = {alpha} misses 1 by {residual}")]
    ResidualTooLarge { alpha: f64, residual: f64 },
}

pub(crate) fn check_theta(theta: f64) -> Result<(), AnalyticError> {
    if theta.is_finite() && theta > 0.0 {
        Ok(())
    } else {
        Err(AnalyticError::BadTheta(theta))
    }
}
