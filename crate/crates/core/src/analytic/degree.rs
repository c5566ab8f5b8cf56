//! Limiting degree laws.
//!
//! `I_i(n, theta) = int_0^inf e^{-theta s} P(xi_i(s) = n) ds` satisfies
//!
//! * `I_i(0) = 1 / (theta + w_i(0))`
//! * `I_i(n) = sum_j w_ij(n - e_j) I_i(n - e_j) / (theta + w_i(n))`
//!
//! with terms off the lattice taken as zero. For total-degree rates the layer
//! sums collapse to the product
//! `I_i(k) = 1 / (theta + w_i(k)) * prod_{n<k} w_i(n) / (theta + w_i(n))`.
//! At `theta = alpha` the limiting fraction of vertices that are of type `i`
//! with child vector `n` is `alpha * u_i / sum(u) * I_i(n)`.

use serde::Serialize;

use super::kernel::MAX_LATTICE_CELLS;
use super::malthusian::{composition_limit, MalthusianSolution};
use super::{check_theta, AnalyticError};
use crate::rates::{RateFamily, RateSpec};

/// Region of the lattice on which the recursion is evaluated. Both shapes
/// are closed under `n -> n - e_j`, so one pass in index order suffices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LatticeBounds {
    /// `{n : n_1 + .. + n_p <= K}`.
    Total(u32),
    /// `{n : n_l <= b_l}`.
    Box(Vec<u32>),
}

/// Values of `I_i(n, theta)` on a down-closed region of the lattice.
#[derive(Debug, Clone)]
pub struct LatticeTable {
    p: usize,
    pub theta: f64,
    dims: Vec<usize>,
    total_cap: Option<u32>,
    values: Vec<f64>,
}

impl LatticeTable {
    pub fn compute(spec: &RateSpec, i: usize, theta: f64, bounds: LatticeBounds) -> Result<Self, AnalyticError> {
        Self::compute_visit(spec, i, theta, bounds, |_, _, _| {})
    }

    /// Evaluate the recursion; `visit(n, w_i.(n), I_i(n))` is called for each
    /// cell inside the region in increasing index order.
    pub fn compute_visit<F>(
        spec: &RateSpec,
        i: usize,
        theta: f64,
        bounds: LatticeBounds,
        mut visit: F,
    ) -> Result<Self, AnalyticError>
    where
        F: FnMut(&[u32], &[f64], f64),
    {
        check_theta(theta)?;
        let p = spec.p();
        if i >= p {
            return Err(crate::rates::RateError::TypeOutOfRange { index: i, p }.into());
        }
        let (dims, total_cap): (Vec<usize>, Option<u32>) = match &bounds {
            LatticeBounds::Total(k) => (vec![*k as usize + 1; p], Some(*k)),
            LatticeBounds::Box(b) => {
                if b.len() != p {
                    return Err(crate::rates::RateError::WrongArity { got: b.len(), p }.into());
                }
                (b.iter().map(|&x| x as usize + 1).collect(), None)
            }
        };
        let cells = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|&c| c <= MAX_LATTICE_CELLS)
            .ok_or(AnalyticError::LatticeTooLarge {
                cells: dims.iter().fold(1usize, |a, &d| a.saturating_mul(d)),
                limit: MAX_LATTICE_CELLS,
            })?;
        let mut strides = vec![1usize; p];
        for l in (0..p.saturating_sub(1)).rev() {
            strides[l] = strides[l + 1] * dims[l + 1];
        }

        // Each slot first accumulates the numerator pushed from its
        // predecessors, then is overwritten with I(n) when visited.
        let mut values = vec![0.0; cells];
        values[0] = 1.0;
        let mut n = vec![0u32; p];
        let mut total: u64 = 0;
        let mut row = vec![0.0; p];
        for idx in 0..cells {
            if total_cap.is_none_or(|k| total <= k as u64) {
                let wt = spec.rate_row(i, &n, &mut row)?;
                let v = values[idx] / (theta + wt);
                values[idx] = v;
                visit(&n, &row, v);
                let room = total_cap.is_none_or(|k| total < k as u64);
                if room {
                    for j in 0..p {
                        if (n[j] as usize) + 1 < dims[j] {
                            values[idx + strides[j]] += row[j] * v;
                        }
                    }
                }
            } else {
                values[idx] = 0.0;
            }
            // Odometer, last coordinate fastest.
            for l in (0..p).rev() {
                if (n[l] as usize) + 1 < dims[l] {
                    n[l] += 1;
                    total += 1;
                    break;
                }
                total -= n[l] as u64;
                n[l] = 0;
            }
        }
        Ok(Self {
            p,
            theta,
            dims,
            total_cap,
            values,
        })
    }

    fn index(&self, n: &[u32]) -> Option<usize> {
        if n.len() != self.p {
            return None;
        }
        if let Some(k) = self.total_cap {
            if n.iter().map(|&x| x as u64).sum::<u64>() > k as u64 {
                return None;
            }
        }
        let mut idx = 0usize;
        for (l, &x) in n.iter().enumerate() {
            if x as usize >= self.dims[l] {
                return None;
            }
            idx = idx * self.dims[l] + x as usize;
        }
        Some(idx)
    }

    /// `I_i(n, theta)`, or `None` outside the computed region.
    pub fn get(&self, n: &[u32]) -> Option<f64> {
        self.index(n).map(|idx| self.values[idx])
    }

    /// Visit every cell of the region with its value.
    pub fn for_each<F: FnMut(&[u32], f64)>(&self, mut f: F) {
        let mut n = vec![0u32; self.p];
        let mut total: u64 = 0;
        for &v in &self.values {
            if self.total_cap.is_none_or(|k| total <= k as u64) {
                f(&n, v);
            }
            for l in (0..self.p).rev() {
                if (n[l] as usize) + 1 < self.dims[l] {
                    n[l] += 1;
                    total += 1;
                    break;
                }
                total -= n[l] as u64;
                n[l] = 0;
            }
        }
    }

    /// `theta * sum I`, the probability mass accounted for by the region.
    pub fn mass(&self) -> f64 {
        self.theta * self.values.iter().sum::<f64>()
    }

    /// `sum_{|n| = k} I_i(n)`.
    pub fn layer_sum(&self, k: u32) -> f64 {
        let mut s = 0.0;
        self.for_each(|n, v| {
            if n.iter().map(|&x| x as u64).sum::<u64>() == k as u64 {
                s += v;
            }
        });
        s
    }

    /// `sum_{n : n_j = k} I_i(n)` over the region.
    pub fn marginal_sum(&self, j: usize, k: u32) -> f64 {
        let mut s = 0.0;
        self.for_each(|n, v| {
            if n[j] == k {
                s += v;
            }
        });
        s
    }
}

/// `I_i(n)` at `theta = alpha` by the lattice recursion over the box below `n`.
pub fn degree_limit_recursion(spec: &RateSpec, alpha: f64, n: &[u32], i: usize) -> Result<f64, AnalyticError> {
    let table = LatticeTable::compute(spec, i, alpha, LatticeBounds::Box(n.to_vec()))?;
    Ok(table.get(n).expect("target lies in its own box"))
}

const LOG_SPACE_FROM: u32 = 500;

/// `I_i(k)` for `k = 0..=k_max` by the total-degree product; running logs
/// take over past `k = 500`.
pub fn degree_limit_total_seq(spec: &RateSpec, alpha: f64, i: usize, k_max: u32) -> Result<Vec<f64>, AnalyticError> {
    check_theta(alpha)?;
    if !spec.depends_on_total_only() {
        return Err(AnalyticError::NotApplicable("total-degree law needs rates depending on total degree only"));
    }
    let p = spec.p();
    let mut out = Vec::with_capacity(k_max as usize + 1);
    let mut prod = 1.0f64;
    let mut log_prod = 0.0f64;
    for k in 0..=k_max {
        let mut wt = 0.0;
        for j in 0..p {
            wt += spec.total_degree_rate(i, j, k)?;
        }
        let v = if k <= LOG_SPACE_FROM {
            prod / (alpha + wt)
        } else {
            (log_prod - (alpha + wt).ln()).exp()
        };
        out.push(v);
        log_prod -= (alpha / wt).ln_1p();
        if k < LOG_SPACE_FROM {
            prod *= wt / (alpha + wt);
        }
    }
    Ok(out)
}

/// `I_i(k)` by the total-degree product.
pub fn degree_limit_total(spec: &RateSpec, alpha: f64, k: u32, i: usize) -> Result<f64, AnalyticError> {
    Ok(*degree_limit_total_seq(spec, alpha, i, k)?.last().expect("k_max + 1 entries"))
}

/// Asymptotic shape of a limiting degree law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TailDescriptor {
    /// `p(k) ~ C k^{-exponent}`.
    PowerLaw { exponent: f64 },
    /// `p(k) ~ C e^{-rate k}`.
    Geometric { rate: f64 },
}

impl TailDescriptor {
    pub fn exponent(&self) -> Option<f64> {
        match *self {
            TailDescriptor::PowerLaw { exponent } => Some(exponent),
            TailDescriptor::Geometric { .. } => None,
        }
    }
}

/// Tail of the total-degree law of type `i` for linear total-degree rates:
/// power law with exponent `1 + alpha / gamma_i` when `gamma_i > 0`, else
/// geometric with rate `log(1 + alpha / beta_i)`.
pub fn tail_exponent(spec: &RateSpec, sol: &MalthusianSolution, i: usize) -> Result<TailDescriptor, AnalyticError> {
    let RateFamily::LinearTotal { gamma, beta } = spec.family() else {
        return Err(AnalyticError::NotApplicable("tail exponent needs linear total-degree rates"));
    };
    if i >= spec.p() {
        return Err(crate::rates::RateError::TypeOutOfRange { index: i, p: spec.p() }.into());
    }
    let g: f64 = gamma[i].iter().sum();
    let b: f64 = beta[i].iter().sum();
    Ok(if g > 0.0 {
        TailDescriptor::PowerLaw {
            exponent: 1.0 + sol.alpha / g,
        }
    } else {
        TailDescriptor::Geometric {
            rate: (sol.alpha / b).ln_1p(),
        }
    })
}

/// Law of the number of type-`j` children of a type-`i` vertex under
/// separable rates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarginalLaw {
    pub descriptor: TailDescriptor,
    /// Set when `gamma_ij = 0`, where the tail is geometric rather than a
    /// power law.
    pub outside_power_case: bool,
    /// `sum_{n : n_j = k} I_i(n)` for `k = 0..=k_max`.
    pub values: Vec<f64>,
}

/// `sum_{n : n_j = k} I_i(n) = 1 / (alpha + w_ij(k)) * prod_{n<k} w_ij(n) / (alpha + w_ij(n))`
/// for separable linear rates, `k = 0..=k_max`.
pub fn marginal_child_law(
    spec: &RateSpec,
    alpha: f64,
    i: usize,
    j: usize,
    k_max: u32,
) -> Result<Vec<f64>, AnalyticError> {
    check_theta(alpha)?;
    let RateFamily::SeparableLinear { gamma, beta } = spec.family() else {
        return Err(AnalyticError::NotApplicable("marginal child law needs separable linear rates"));
    };
    let p = spec.p();
    if i >= p || j >= p {
        return Err(crate::rates::RateError::TypeOutOfRange { index: i.max(j), p }.into());
    }
    let (g, b) = (gamma[i][j], beta[i][j]);
    let mut out = Vec::with_capacity(k_max as usize + 1);
    let mut prod = 1.0f64;
    let mut log_prod = 0.0f64;
    for k in 0..=k_max {
        let w = g * k as f64 + b;
        let v = if k <= LOG_SPACE_FROM {
            prod / (alpha + w)
        } else {
            (log_prod - (alpha + w).ln()).exp()
        };
        out.push(v);
        log_prod -= (alpha / w).ln_1p();
        if k < LOG_SPACE_FROM {
            prod *= w / (alpha + w);
        }
    }
    Ok(out)
}

/// Tail of the type-`j` child count of type-`i` vertices under separable
/// rates: exponent `1 + alpha / gamma_ij`, or geometric when `gamma_ij = 0`.
pub fn marginal_child_exponent(
    spec: &RateSpec,
    sol: &MalthusianSolution,
    i: usize,
    j: usize,
    k_max: u32,
) -> Result<MarginalLaw, AnalyticError> {
    let values = marginal_child_law(spec, sol.alpha, i, j, k_max)?;
    let (gamma, beta) = spec.linear_params().expect("separable checked above");
    let (g, b) = (gamma[i][j], beta[i][j]);
    let (descriptor, outside_power_case) = if g > 0.0 {
        (
            TailDescriptor::PowerLaw {
                exponent: 1.0 + sol.alpha / g,
            },
            false,
        )
    } else {
        (
            TailDescriptor::Geometric {
                rate: (sol.alpha / b).ln_1p(),
            },
            true,
        )
    };
    Ok(MarginalLaw {
        descriptor,
        outside_power_case,
        values,
    })
}

/// Fit `C` in `alpha u_i / sum(u) I_i(k) ~ C k^{-exponent}` by least squares
/// in log space over `k in [32, 1024]`.
pub fn tail_constant(spec: &RateSpec, sol: &MalthusianSolution, i: usize) -> Result<Option<f64>, AnalyticError> {
    let Some(exponent) = tail_exponent(spec, sol, i)?.exponent() else {
        return Ok(None);
    };
    let weight = sol.alpha * composition_limit(sol)[i];
    let seq = degree_limit_total_seq(spec, sol.alpha, i, 1024)?;
    let (lo, hi) = (32usize, 1024usize);
    // With the slope pinned, the least-squares intercept is the mean residual.
    let mean: f64 = (lo..=hi)
        .map(|k| (weight * seq[k]).ln() + exponent * (k as f64).ln())
        .sum::<f64>()
        / (hi - lo + 1) as f64;
    Ok(Some(mean.exp()))
}

/// Limit values on total degree for every type.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DegreeLawTable {
    pub alpha: f64,
    /// `u_i / sum(u)`.
    pub composition: Vec<f64>,
    /// `I_i(k)`, `k = 0..=k_max`, per type.
    pub values: Vec<Vec<f64>>,
}

impl DegreeLawTable {
    /// `alpha * u_i / sum(u) * I_i(k)`.
    pub fn limit_fraction(&self, i: usize, k: usize) -> f64 {
        self.alpha * self.composition[i] * self.values[i][k]
    }

    pub fn k_max(&self) -> usize {
        self.values.first().map_or(0, |v| v.len().saturating_sub(1))
    }
}

pub fn degree_law_table(spec: &RateSpec, sol: &MalthusianSolution, k_max: u32) -> Result<DegreeLawTable, AnalyticError> {
    let values = (0..spec.p())
        .map(|i| degree_limit_total_seq(spec, sol.alpha, i, k_max))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(DegreeLawTable {
        alpha: sol.alpha,
        composition: composition_limit(sol),
        values,
    })
}
