//! Brute-force check of the degree laws: integrate the forward equations
//!
//! `dP(n)/dt = sum_j w_ij(n - e_j) P(n - e_j) - w_i(n) P(n)`
//!
//! for the child-count vector of a single type-`i` vertex on the truncated
//! lattice `{|n| <= K}` with classical RK4, then evaluate
//! `int_0^inf e^{-alpha s} P(n, s) ds` by Simpson's rule on the stored grid.
//! Probability flowing out of the top layer is collected as leaked mass.
//! The chain only moves upward, so the truncation is exact for states
//! inside the lattice.

use serde::Serialize;
use thiserror::Error;

use crate::analytic::MAX_LATTICE_CELLS;
use crate::rates::{RateError, RateSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error(transparent)]
    Rate(#[from] RateError),
    #[error("lattice of {cells} cells exceeds the limit of {limit}")]
    LatticeTooLarge { cells: usize, limit: usize },
    #[error("step {dt} underflows for maximum rate {max_rate}")]
    StepUnderflow { dt: f64, max_rate: f64 },
    #[error("leaked mass {leaked} at t = {t_max} exceeds the budget {budget}")]
    LeakBudget { leaked: f64, t_max: f64, budget: f64 },
    #[error("tail bound {bound} exceeds tolerance {tol}")]
    TailTooLarge { bound: f64, tol: f64 },
    #[error("{0}")]
    BadInput(&'static str),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOptions {
    /// Step is at most `step_factor / max_rate`.
    pub step_factor: f64,
    /// Number of stored grid intervals (made even for Simpson's rule).
    pub snapshots: usize,
    /// Largest leaked mass accepted at `t_max`.
    pub leak_budget: f64,
    pub min_step: f64,
}

impl Default for ForwardOptions {
    fn default() -> Self {
        Self {
            step_factor: 0.1,
            snapshots: 2048,
            leak_budget: 1.0,
            min_step: 1e-12,
        }
    }
}

/// Horizon with `e^{-alpha t} < 1e-10`.
pub fn default_t_max(alpha: f64) -> f64 {
    23.03 / alpha
}

/// Transition probabilities of one vertex's child-count process on a
/// uniform time grid.
#[derive(Debug, Clone, Serialize)]
pub struct ForwardSolution {
    pub p: usize,
    pub cap: u32,
    pub times: Vec<f64>,
    /// Lattice points in enumeration order.
    #[serde(skip)]
    cells: Vec<Vec<u32>>,
    #[serde(skip)]
    lookup: Vec<usize>,
    /// `probs[t][c]` is `P(xi(times[t]) = cells[c])`.
    #[serde(skip)]
    probs: Vec<Vec<f64>>,
    pub leaked: Vec<f64>,
    pub steps: usize,
}

const NONE: usize = usize::MAX;

impl ForwardSolution {
    fn box_index(&self, n: &[u32]) -> Option<usize> {
        box_index(n, self.cap, self.p)
    }

    fn cell(&self, n: &[u32]) -> Option<usize> {
        if n.len() != self.p || n.iter().map(|&x| x as u64).sum::<u64>() > self.cap as u64 {
            return None;
        }
        self.box_index(n).map(|b| self.lookup[b]).filter(|&c| c != NONE)
    }

    /// `P(xi(times[t]) = n)`; zero outside the lattice.
    pub fn prob(&self, t: usize, n: &[u32]) -> f64 {
        self.cell(n).map_or(0.0, |c| self.probs[t][c])
    }

    pub fn cells(&self) -> &[Vec<u32>] {
        &self.cells
    }

    /// Probability mass inside the lattice at grid time `t`.
    pub fn total(&self, t: usize) -> f64 {
        self.probs[t].iter().sum()
    }

    pub fn t_max(&self) -> f64 {
        *self.times.last().expect("grid is never empty")
    }
}

fn box_index(n: &[u32], cap: u32, p: usize) -> Option<usize> {
    let side = cap as usize + 1;
    let mut idx = 0usize;
    for &x in n.iter().take(p) {
        if x > cap {
            return None;
        }
        idx = idx * side + x as usize;
    }
    Some(idx)
}

pub fn integrate_forward(
    spec: &RateSpec,
    i: usize,
    cap: u32,
    t_max: f64,
    opts: &ForwardOptions,
) -> Result<ForwardSolution, OracleError> {
    let p = spec.p();
    if i >= p {
        return Err(RateError::TypeOutOfRange { index: i, p }.into());
    }
    if !(t_max.is_finite() && t_max > 0.0) {
        return Err(OracleError::BadInput("t_max must be positive and finite"));
    }
    let side = cap as usize + 1;
    let box_cells = (0..p)
        .try_fold(1usize, |acc, _| acc.checked_mul(side))
        .filter(|&c| c <= MAX_LATTICE_CELLS)
        .ok_or(OracleError::LatticeTooLarge {
            cells: usize::MAX,
            limit: MAX_LATTICE_CELLS,
        })?;

    // Enumerate {|n| <= K} in box order, which lists every predecessor
    // n - e_j before n.
    let mut cells = Vec::new();
    let mut lookup = vec![NONE; box_cells];
    let mut n = vec![0u32; p];
    for b in 0..box_cells {
        let mut rem = b;
        for slot in n.iter_mut().rev() {
            *slot = (rem % side) as u32;
            rem /= side;
        }
        if n.iter().map(|&x| x as u64).sum::<u64>() <= cap as u64 {
            lookup[b] = cells.len();
            cells.push(n.clone());
        }
    }

    // Per cell: outflow rate, incoming edges (source cell, rate) and the
    // rate leaving the lattice.
    let mut out_rate = Vec::with_capacity(cells.len());
    let mut leak_rate = Vec::with_capacity(cells.len());
    let mut incoming: Vec<Vec<(usize, f64)>> = vec![Vec::new(); cells.len()];
    let mut row = vec![0.0; p];
    for (c, n) in cells.iter().enumerate() {
        let wt = spec.rate_row(i, n, &mut row)?;
        out_rate.push(wt);
        let on_top = n.iter().map(|&x| x as u64).sum::<u64>() == cap as u64;
        leak_rate.push(if on_top { wt } else { 0.0 });
        if !on_top {
            let mut m = n.clone();
            for j in 0..p {
                m[j] += 1;
                let target = lookup[box_index(&m, cap, p).expect("below cap")];
                incoming[target].push((c, row[j]));
                m[j] -= 1;
            }
        }
    }
    let max_rate = out_rate.iter().cloned().fold(0.0, f64::max);

    let intervals = opts.snapshots.max(2).next_multiple_of(2);
    let per_interval = if max_rate > 0.0 {
        ((t_max * max_rate / (opts.step_factor * intervals as f64)).ceil() as usize).max(1)
    } else {
        1
    };
    let steps = intervals * per_interval;
    let dt = t_max / steps as f64;
    if dt < opts.min_step {
        return Err(OracleError::StepUnderflow { dt, max_rate });
    }

    let nc = cells.len();
    let deriv = |x: &[f64], dx: &mut [f64]| -> f64 {
        let mut leak = 0.0;
        for c in 0..nc {
            let mut v = -out_rate[c] * x[c];
            for &(src, r) in &incoming[c] {
                v += r * x[src];
            }
            dx[c] = v;
            leak += leak_rate[c] * x[c];
        }
        leak
    };

    let mut x = vec![0.0; nc];
    x[0] = 1.0;
    let mut leaked = 0.0;
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) =
        (vec![0.0; nc], vec![0.0; nc], vec![0.0; nc], vec![0.0; nc], vec![0.0; nc]);
    let mut times = vec![0.0];
    let mut probs = vec![x.clone()];
    let mut leaks = vec![0.0];
    for s in 1..=steps {
        let l1 = deriv(&x, &mut k1);
        for c in 0..nc {
            tmp[c] = x[c] + 0.5 * dt * k1[c];
        }
        let l2 = deriv(&tmp, &mut k2);
        for c in 0..nc {
            tmp[c] = x[c] + 0.5 * dt * k2[c];
        }
        let l3 = deriv(&tmp, &mut k3);
        for c in 0..nc {
            tmp[c] = x[c] + dt * k3[c];
        }
        let l4 = deriv(&tmp, &mut k4);
        for c in 0..nc {
            x[c] += dt / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
        }
        leaked += dt / 6.0 * (l1 + 2.0 * l2 + 2.0 * l3 + l4);
        if s % per_interval == 0 {
            times.push(s as f64 * dt);
            probs.push(x.clone());
            leaks.push(leaked);
        }
    }
    if leaked > opts.leak_budget {
        return Err(OracleError::LeakBudget {
            leaked,
            t_max,
            budget: opts.leak_budget,
        });
    }
    Ok(ForwardSolution {
        p,
        cap,
        times,
        cells,
        lookup,
        probs,
        leaked: leaks,
        steps,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Quadrature {
    /// Simpson estimate of `int_0^{t_max} e^{-alpha s} P(n, s) ds`.
    pub value: f64,
    /// `e^{-alpha t_max} / alpha`, bounding the omitted tail.
    pub tail_bound: f64,
}

/// Laplace transform at `alpha` of `P(xi(s) = n)`. Fails when the tail
/// bound exceeds `tol`.
pub fn laplace_quadrature(fs: &ForwardSolution, alpha: f64, n: &[u32], tol: f64) -> Result<Quadrature, OracleError> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(OracleError::BadInput("alpha must be positive and finite"));
    }
    let tail_bound = (-alpha * fs.t_max()).exp() / alpha;
    if tail_bound > tol {
        return Err(OracleError::TailTooLarge { bound: tail_bound, tol });
    }
    let Some(c) = fs.cell(n) else {
        return Ok(Quadrature { value: 0.0, tail_bound });
    };
    let m = fs.times.len() - 1;
    let h = fs.t_max() / m as f64;
    let f = |t: usize| (-alpha * fs.times[t]).exp() * fs.probs[t][c];
    let mut s = f(0) + f(m);
    for t in 1..m {
        s += if t % 2 == 1 { 4.0 * f(t) } else { 2.0 * f(t) };
    }
    Ok(Quadrature {
        value: s * h / 3.0,
        tail_bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_type(g: f64, b: f64) -> RateSpec {
        RateSpec::linear_total(vec![vec![g]], vec![vec![b]]).unwrap()
    }

    #[test]
    fn poisson_law() {
        let fs = integrate_forward(&one_type(0.0, 1.0), 0, 40, 1.0, &ForwardOptions::default()).unwrap();
        let last = fs.times.len() - 1;
        assert!((fs.times[last] - 1.0).abs() < 1e-12);
        assert!((fs.prob(last, &[0]) - (-1.0f64).exp()).abs() < 1e-6);
        assert!((fs.prob(last, &[3]) - (-1.0f64).exp() / 6.0).abs() < 1e-6);
    }

    #[test]
    fn initial_condition() {
        let spec = RateSpec::linear_total(vec![vec![1.0, 0.5]; 2], vec![vec![1.0; 2]; 2]).unwrap();
        let fs = integrate_forward(&spec, 1, 5, 1.0, &ForwardOptions::default()).unwrap();
        assert_eq!(fs.prob(0, &[0, 0]), 1.0);
        assert_eq!(fs.total(0), 1.0);
        assert_eq!(fs.prob(0, &[1, 0]), 0.0);
    }

    #[test]
    fn yule_holding_time() {
        let fs = integrate_forward(&one_type(1.0, 1.0), 0, 60, 2.0, &ForwardOptions::default()).unwrap();
        for (t, &time) in fs.times.iter().enumerate().step_by(97) {
            assert!((fs.prob(t, &[0]) - (-time).exp()).abs() < 1e-6);
        }
    }

    #[test]
    fn mass_is_conserved_and_leak_grows() {
        let fs = integrate_forward(&one_type(1.0, 1.0), 0, 10, 3.0, &ForwardOptions::default()).unwrap();
        for t in 0..fs.times.len() {
            assert!((fs.total(t) + fs.leaked[t] - 1.0).abs() < 1e-9);
            if t > 0 {
                assert!(fs.leaked[t] >= fs.leaked[t - 1]);
            }
        }
        assert!(fs.leaked.last().unwrap() > &0.0);
    }

    #[test]
    fn quadrature_values() {
        let fs = integrate_forward(&one_type(0.0, 1.0), 0, 4, default_t_max(1.0), &ForwardOptions::default()).unwrap();
        let q = laplace_quadrature(&fs, 1.0, &[0], 1e-9).unwrap();
        assert!((q.value - 0.5).abs() < 1e-8);
        assert_eq!(laplace_quadrature(&fs, 1.0, &[9], 1e-9).unwrap().value, 0.0);

        let fs = integrate_forward(&one_type(1.0, 1.0), 0, 30, default_t_max(2.0), &ForwardOptions::default()).unwrap();
        let q = laplace_quadrature(&fs, 2.0, &[0], 1e-9).unwrap();
        assert!((q.value - 1.0 / 3.0).abs() < 1e-5);
    }

    #[test]
    fn tail_bound_enforced() {
        let fs = integrate_forward(&one_type(0.0, 1.0), 0, 4, 1.0, &ForwardOptions::default()).unwrap();
        assert!(matches!(
            laplace_quadrature(&fs, 1.0, &[0], 1e-6),
            Err(OracleError::TailTooLarge { .. })
        ));
    }

    #[test]
    fn leak_budget_enforced() {
        let opts = ForwardOptions {
            leak_budget: 1e-3,
            ..Default::default()
        };
        assert!(matches!(
            integrate_forward(&one_type(1.0, 1.0), 0, 3, 5.0, &opts),
            Err(OracleError::LeakBudget { .. })
        ));
    }
}
