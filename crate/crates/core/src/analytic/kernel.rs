//! The matrix `mu*(theta)` of Laplace-transformed reproduction intensities.
//!
//! Four routes are available. [`laplace_kernel_closed`] and
//! [`laplace_kernel_separable`] are exact for the two linear families;
//! [`laplace_kernel_series`] sums the total-degree product series; and
//! [`laplace_kernel_lattice`] sums `w_ij(n) I_i(n, theta)` over a truncated
//! lattice for arbitrary rates.

use serde::Serialize;

use super::degree::{LatticeBounds, LatticeTable};
use super::{check_theta, AnalyticError};
use crate::rates::{RateFamily, RateSpec};

/// Largest dense lattice box the lattice routes will allocate.
pub const MAX_LATTICE_CELLS: usize = 50_000_000;

/// `mu*(theta)`; `None` entries are infinite.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelMatrix {
    pub theta: f64,
    p: usize,
    entries: Vec<Option<f64>>,
    /// Per row, `1 - theta * sum I_i(n, theta)` over the summed region.
    /// Zero for exact routes.
    pub residual_mass: Vec<f64>,
}

impl KernelMatrix {
    fn new(theta: f64, p: usize) -> Self {
        Self {
            theta,
            p,
            entries: vec![Some(0.0); p * p],
            residual_mass: vec![0.0; p],
        }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.entries[i * self.p + j]
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(Option::is_some)
    }

    pub fn row_is_finite(&self, i: usize) -> bool {
        (0..self.p).all(|j| self.get(i, j).is_some())
    }

    fn set(&mut self, i: usize, j: usize, v: Option<f64>) {
        self.entries[i * self.p + j] = v;
    }

    fn mark_row_infinite(&mut self, i: usize) {
        for j in 0..self.p {
            self.set(i, j, None);
        }
    }

    /// Dense finite matrix, or [`AnalyticError::KernelDivergent`].
    pub fn to_dense(&self) -> Result<Vec<Vec<f64>>, AnalyticError> {
        (0..self.p)
            .map(|i| {
                (0..self.p)
                    .map(|j| self.get(i, j).ok_or(AnalyticError::KernelDivergent { theta: self.theta }))
                    .collect()
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelOptions {
    /// Target bound on the estimated series tail.
    pub series_tol: f64,
    pub series_max_terms: usize,
    /// Terms summed explicitly before an affine tail may close the series.
    pub series_min_terms: usize,
    /// Consecutive terms with local decay exponent <= 1 before a row is
    /// declared divergent.
    pub divergence_run: usize,
    /// Total-degree cap for the lattice route.
    pub lattice_cap: u32,
}

impl Default for KernelOptions {
    fn default() -> Self {
        Self {
            series_tol: 1e-12,
            series_max_terms: 10_000_000,
            series_min_terms: 256,
            divergence_run: 10_000,
            lattice_cap: 200,
        }
    }
}

/// Exact kernel for `w_ij(n) = gamma_ij |n| + beta_ij`.
///
/// Row `i` is infinite when `theta <= gamma_i1 + .. + gamma_ip` (and that sum is
/// positive); otherwise
/// `mu*_ij = beta_ij / theta + gamma_ij (beta_i1 + .. + beta_ip) / (theta (theta - gamma_i))`.
pub fn laplace_kernel_closed(spec: &RateSpec, theta: f64) -> Result<KernelMatrix, AnalyticError> {
    check_theta(theta)?;
    let RateFamily::LinearTotal { gamma, beta } = spec.family() else {
        return Err(AnalyticError::NotApplicable("closed-form kernel needs linear total-degree rates"));
    };
    let p = spec.p();
    let mut km = KernelMatrix::new(theta, p);
    for i in 0..p {
        let g: f64 = gamma[i].iter().sum();
        let b: f64 = beta[i].iter().sum();
        if g > 0.0 && theta <= g {
            km.mark_row_infinite(i);
            continue;
        }
        for j in 0..p {
            let v = beta[i][j] / theta + gamma[i][j] * b / (theta * (theta - g));
            km.set(i, j, Some(v));
        }
    }
    Ok(km)
}

/// Exact kernel for `w_ij(n) = gamma_ij n_j + beta_ij`.
///
/// The coordinates of the child-count chain evolve independently, each a
/// one-type linear birth process, so `mu*_ij = beta_ij / (theta - gamma_ij)`
/// for `theta > gamma_ij` and infinite otherwise.
pub fn laplace_kernel_separable(spec: &RateSpec, theta: f64) -> Result<KernelMatrix, AnalyticError> {
    check_theta(theta)?;
    let RateFamily::SeparableLinear { gamma, beta } = spec.family() else {
        return Err(AnalyticError::NotApplicable("separable kernel needs separable linear rates"));
    };
    let p = spec.p();
    let mut km = KernelMatrix::new(theta, p);
    for i in 0..p {
        if gamma[i].iter().any(|&g| g > 0.0 && theta <= g) {
            km.mark_row_infinite(i);
            continue;
        }
        for j in 0..p {
            km.set(i, j, Some(beta[i][j] / (theta - gamma[i][j])));
        }
    }
    Ok(km)
}

const LOG_SPACE_FROM: usize = 500;

/// Kernel from the total-degree product series
/// `mu*_ij = sum_k w_ij(k) / (theta + w_i(k)) * prod_{n<k} w_i(n) / (theta + w_i(n))`.
///
/// The head of the series is summed term by term. Once at least
/// `series_min_terms` terms are in and the rates are affine from the current
/// degree `M` on (see [`RateSpec::affine_from`]), the remainder is closed by
/// summation by parts: with `P_M` the probability of reaching degree `M` and
/// slopes `d_ij = w_ij(M+1) - w_ij(M)`,
///
/// `tail_ij = (w_ij(M) P_M + d_ij S) / theta`, `S = w_i(M) P_M / (theta - d_i)`,
///
/// and the row diverges when `d_i >= theta`. Without an affine region the sum
/// runs until the estimated tail of the row-total terms (the larger of a
/// geometric bound from the last term ratio and a power-law bound from the
/// local decay exponent) drops below `series_tol`; a row whose local decay
/// exponent stays at or below 1 for `divergence_run` consecutive terms is
/// declared divergent.
pub fn laplace_kernel_series(
    spec: &RateSpec,
    theta: f64,
    opts: &KernelOptions,
) -> Result<KernelMatrix, AnalyticError> {
    check_theta(theta)?;
    if !spec.depends_on_total_only() {
        return Err(AnalyticError::NotApplicable("series kernel needs rates depending on total degree only"));
    }
    let p = spec.p();
    let affine_from = spec.affine_from().map(|a| a as usize);
    let mut km = KernelMatrix::new(theta, p);
    let mut w = vec![0.0; p];
    let mut w_next = vec![0.0; p];
    let mut sums = vec![0.0; p];
    for i in 0..p {
        sums.iter_mut().for_each(|s| *s = 0.0);
        // P_k, the probability of reaching degree k: plain product, then logs.
        let mut reach = 1.0f64;
        let mut log_reach = 0.0f64;
        let mut prev_term = f64::NAN;
        let mut slow_run = 0usize;
        let mut verdict = None;
        for k in 0..opts.series_max_terms {
            let wt = degree_rates(spec, i, k, &mut w)?;
            let denom = theta + wt;
            let i_k = if k <= LOG_SPACE_FROM {
                reach / denom
            } else {
                (log_reach - denom.ln()).exp()
            };
            for j in 0..p {
                sums[j] += w[j] * i_k;
            }
            let term = wt * i_k;

            let step = -(theta / wt).ln_1p();
            log_reach += step;
            if k < LOG_SPACE_FROM {
                reach *= wt / denom;
            }
            let m = k + 1;
            let reach_m = if m <= LOG_SPACE_FROM { reach } else { log_reach.exp() };

            if term == 0.0 || reach_m == 0.0 {
                verdict = Some(true);
                break;
            }
            if m >= opts.series_min_terms && affine_from.is_some_and(|a| m >= a) {
                let wm = degree_rates(spec, i, m, &mut w)?;
                let wm1 = degree_rates(spec, i, m + 1, &mut w_next)?;
                let slope = wm1 - wm;
                if slope >= theta {
                    verdict = Some(false);
                } else {
                    let s = wm * reach_m / (theta - slope);
                    for j in 0..p {
                        sums[j] += (w[j] * reach_m + (w_next[j] - w[j]) * s) / theta;
                    }
                    verdict = Some(true);
                }
                break;
            }
            if k >= 1 && prev_term > 0.0 {
                let ratio = term / prev_term;
                let kf = k as f64;
                let local_exp = (prev_term / term).ln() / ((kf + 1.0) / kf).ln();
                let geometric = if ratio < 1.0 { term * ratio / (1.0 - ratio) } else { f64::INFINITY };
                let power = if local_exp > 1.0 { term * (kf + 1.0) / (local_exp - 1.0) } else { f64::INFINITY };
                if geometric.max(power) < opts.series_tol {
                    verdict = Some(true);
                    break;
                }
                if local_exp <= 1.0 {
                    slow_run += 1;
                    if slow_run >= opts.divergence_run {
                        verdict = Some(false);
                        break;
                    }
                } else {
                    slow_run = 0;
                }
            }
            prev_term = term;
        }
        match verdict {
            Some(true) => {
                for j in 0..p {
                    km.set(i, j, Some(sums[j]));
                }
            }
            Some(false) => km.mark_row_infinite(i),
            None => {
                return Err(AnalyticError::SeriesUndecided {
                    row: i,
                    terms: opts.series_max_terms,
                    partial_sum: sums.iter().sum(),
                })
            }
        }
    }
    Ok(km)
}

fn degree_rates(spec: &RateSpec, i: usize, k: usize, out: &mut [f64]) -> Result<f64, AnalyticError> {
    let k = u32::try_from(k).map_err(|_| AnalyticError::NotApplicable("degree index overflow"))?;
    let mut total = 0.0;
    for (j, slot) in out.iter_mut().enumerate() {
        *slot = spec.total_degree_rate(i, j, k)?;
        total += *slot;
    }
    Ok(total)
}

/// Kernel from the truncated lattice sum `sum_{|n| <= K} w_ij(n) I_i(n, theta)`.
///
/// Always finite; the unaccounted probability mass per row is reported in
/// [`KernelMatrix::residual_mass`]. The dense box has `(K + 1)^p` cells.
pub fn laplace_kernel_lattice(spec: &RateSpec, theta: f64, cap: u32) -> Result<KernelMatrix, AnalyticError> {
    check_theta(theta)?;
    let p = spec.p();
    let mut km = KernelMatrix::new(theta, p);
    for i in 0..p {
        let mut mu = vec![0.0; p];
        let mut mass = 0.0;
        LatticeTable::compute_visit(spec, i, theta, LatticeBounds::Total(cap), |_, row, value| {
            for j in 0..p {
                mu[j] += row[j] * value;
            }
            mass += value;
        })?;
        for (j, v) in mu.into_iter().enumerate() {
            km.set(i, j, Some(v));
        }
        km.residual_mass[i] = 1.0 - theta * mass;
    }
    Ok(km)
}

/// Route selection: closed forms for the linear families, the series for
/// total-degree tables and the lattice for vector tables.
pub fn laplace_kernel(spec: &RateSpec, theta: f64, opts: &KernelOptions) -> Result<KernelMatrix, AnalyticError> {
    match spec.family() {
        RateFamily::LinearTotal { .. } => laplace_kernel_closed(spec, theta),
        RateFamily::SeparableLinear { .. } => laplace_kernel_separable(spec, theta),
        RateFamily::GeneralTable(_) if spec.depends_on_total_only() => laplace_kernel_series(spec, theta, opts),
        RateFamily::GeneralTable(_) => laplace_kernel_lattice(spec, theta, opts.lattice_cap),
    }
}
