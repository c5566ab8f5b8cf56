//! The Malthusian parameter: the root `alpha` of `rho(mu*(theta)) = 1`.

use serde::Serialize;

use super::kernel::{laplace_kernel, KernelMatrix, KernelOptions};
use super::perron::{perron, PerronOptions, PerronResult};
use super::AnalyticError;
use crate::rates::{RateFamily, RateSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct MalthusianOptions {
    /// Bisection stops once the bracket is at most this wide.
    pub theta_tol: f64,
    pub perron: PerronOptions,
    /// Cap on the halvings and doublings used to find a bracket.
    pub max_doublings: usize,
    /// Required `|rho(mu*(alpha)) - 1|`.
    pub rho_tol: f64,
    pub kernel: KernelOptions,
    /// Largest residual mass accepted from a truncated lattice kernel.
    pub lattice_mass_tol: f64,
}

impl Default for MalthusianOptions {
    fn default() -> Self {
        Self {
            theta_tol: 1e-12,
            perron: PerronOptions::default(),
            max_doublings: 200,
            rho_tol: 1e-10,
            kernel: KernelOptions::default(),
            lattice_mass_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MalthusianSolution {
    pub alpha: f64,
    /// Left Perron eigenvector of `mu*(alpha)`, `u . v = 1`.
    pub u: Vec<f64>,
    /// Right Perron eigenvector of `mu*(alpha)`, `sum(v) = 1`.
    pub v: Vec<f64>,
    pub rho_residual: f64,
    pub bisection_iterations: usize,
    pub power_iterations: usize,
    #[serde(skip)]
    pub kernel_at_alpha: Vec<Vec<f64>>,
}

/// Perron root at `theta`, or `None` when the kernel is infinite there.
fn root_at(spec: &RateSpec, theta: f64, opts: &MalthusianOptions) -> Result<Option<(PerronResult, KernelMatrix)>, AnalyticError> {
    let km = match laplace_kernel(spec, theta, &opts.kernel) {
        Ok(km) => km,
        Err(AnalyticError::KernelDivergent { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    if !km.is_finite() {
        return Ok(None);
    }
    let dense = km.to_dense()?;
    Ok(Some((perron(&dense, &opts.perron)?, km)))
}

fn no_root(msg: impl Into<String>) -> AnalyticError {
    AnalyticError::NoMalthusian(msg.into())
}

/// Find `theta_lo` with a finite kernel and `rho > 1`.
fn lower_bracket(spec: &RateSpec, opts: &MalthusianOptions) -> Result<f64, AnalyticError> {
    const EPS: f64 = 1e-9;
    let boundary = match spec.family() {
        RateFamily::LinearTotal { gamma, .. } => {
            Some(gamma.iter().map(|r| r.iter().sum::<f64>()).fold(0.0, f64::max))
        }
        RateFamily::SeparableLinear { gamma, .. } => {
            Some(gamma.iter().flat_map(|r| r.iter().copied()).fold(0.0, f64::max))
        }
        RateFamily::GeneralTable(_) => None,
    };
    if let Some(b) = boundary {
        let lo = b + EPS;
        return match root_at(spec, lo, opts)? {
            Some((r, _)) if r.rho > 1.0 => Ok(lo),
            Some((r, _)) => Err(no_root(format!(
                "spectral radius {} <= 1 just above the divergence boundary {b}",
                r.rho
            ))),
            None => Err(no_root(format!("kernel infinite just above the divergence boundary {b}"))),
        };
    }

    // Tabulated rates: walk from theta = 1 until a finite kernel with rho > 1
    // turns up, refining between the last infinite and finite points.
    let mut theta = 1.0;
    let mut infinite_at: Option<f64> = None;
    let mut finite_at: Option<f64> = None;
    for _ in 0..opts.max_doublings {
        match root_at(spec, theta, opts)? {
            Some((r, _)) if r.rho > 1.0 => return Ok(theta),
            Some(_) => {
                finite_at = Some(theta);
                theta = match infinite_at {
                    Some(bad) => 0.5 * (bad + theta),
                    None => 0.5 * theta,
                };
            }
            None => {
                infinite_at = Some(theta);
                theta = match finite_at {
                    Some(good) => 0.5 * (good + theta),
                    None => 2.0 * theta,
                };
            }
        }
        if let (Some(a), Some(b)) = (infinite_at, finite_at) {
            if (b - a).abs() <= opts.theta_tol * b.max(1.0) {
                break;
            }
        }
    }
    Err(no_root("spectral radius never exceeds 1 where the kernel is finite"))
}

pub fn malthusian(spec: &RateSpec, opts: &MalthusianOptions) -> Result<MalthusianSolution, AnalyticError> {
    spec.check_nonexplosion()?;
    let mut lo = lower_bracket(spec, opts)?;
    let mut hi = lo.max(1.0);
    let mut doublings = 0;
    loop {
        if let Some((r, _)) = root_at(spec, hi, opts)? {
            if r.rho < 1.0 {
                break;
            }
            lo = hi;
        }
        hi *= 2.0;
        doublings += 1;
        if doublings > opts.max_doublings {
            return Err(no_root("spectral radius stays above 1 for all tried theta"));
        }
    }

    let mut iterations = 0;
    let mut best: Option<(f64, PerronResult, KernelMatrix)> = None;
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        iterations += 1;
        let (r, km) = root_at(spec, mid, opts)?.ok_or(AnalyticError::KernelDivergent { theta: mid })?;
        let g = r.rho - 1.0;
        if g > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        let converged = hi - lo <= opts.theta_tol && g.abs() <= opts.rho_tol;
        best = Some((mid, r, km));
        if converged {
            break;
        }
    }
    let (alpha, r, km) = match best {
        Some(b) => b,
        None => {
            let (r, km) = root_at(spec, lo, opts)?.ok_or(AnalyticError::KernelDivergent { theta: lo })?;
            (lo, r, km)
        }
    };
    let residual = (r.rho - 1.0).abs();
    if residual > opts.rho_tol {
        return Err(AnalyticError::ResidualTooLarge { alpha, residual });
    }
    if let Some((row, &res)) = km
        .residual_mass
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
    {
        if res > opts.lattice_mass_tol {
            return Err(AnalyticError::LatticeUnresolved {
                row,
                residual: res,
                tol: opts.lattice_mass_tol,
            });
        }
    }
    Ok(MalthusianSolution {
        alpha,
        u: r.u,
        v: r.v,
        rho_residual: residual,
        bisection_iterations: iterations,
        power_iterations: r.iterations,
        kernel_at_alpha: km.to_dense()?,
    })
}

/// Limiting type composition `u_i / sum(u)`.
pub fn composition_limit(sol: &MalthusianSolution) -> Vec<f64> {
    let s: f64 = sol.u.iter().sum();
    sol.u.iter().map(|x| x / s).collect()
}
