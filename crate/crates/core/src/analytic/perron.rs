//! Perron root and eigenvectors of a strictly positive matrix by power
//! iteration.

use serde::Serialize;

use super::AnalyticError;

#[derive(Debug, Clone, PartialEq)]
pub struct PerronOptions {
    /// Stop when successive root estimates differ by at most this much
    /// (relative to the root) and the eigenvector moved by at most this much.
    pub tol: f64,
    pub max_iterations: usize,
}

impl Default for PerronOptions {
    fn default() -> Self {
        Self {
            tol: 1e-13,
            max_iterations: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerronResult {
    pub rho: f64,
    /// Left eigenvector, scaled so that `u . v = 1`.
    pub u: Vec<f64>,
    /// Right eigenvector, scaled so that `sum(v) = 1`.
    pub v: Vec<f64>,
    pub iterations: usize,
}

/// Power iteration with iterates normalised to unit sum; returns the root
/// estimate and the vector.
fn power(m: &[Vec<f64>], transpose: bool, opts: &PerronOptions) -> Result<(f64, Vec<f64>, usize), AnalyticError> {
    let p = m.len();
    let mut x = vec![1.0 / p as f64; p];
    let mut next = vec![0.0; p];
    let mut rho_prev = f64::NAN;
    for it in 1..=opts.max_iterations {
        for (a, slot) in next.iter_mut().enumerate() {
            *slot = (0..p)
                .map(|b| if transpose { m[b][a] * x[b] } else { m[a][b] * x[b] })
                .sum();
        }
        // x sums to one, so the sum of the image is the Rayleigh-type estimate.
        let rho: f64 = next.iter().sum();
        let mut moved = 0.0f64;
        for (xa, &na) in x.iter_mut().zip(&next) {
            let y = na / rho;
            moved = moved.max((y - *xa).abs());
            *xa = y;
        }
        if (rho - rho_prev).abs() <= opts.tol * rho && moved <= opts.tol {
            return Ok((rho, x, it));
        }
        rho_prev = rho;
    }
    Err(AnalyticError::PerronNoConvergence {
        iterations: opts.max_iterations,
    })
}

pub fn perron(m: &[Vec<f64>], opts: &PerronOptions) -> Result<PerronResult, AnalyticError> {
    let p = m.len();
    if p == 0 || m.iter().any(|r| r.len() != p) {
        return Err(crate::rates::RateError::BadShape { name: "matrix", p }.into());
    }
    for (i, row) in m.iter().enumerate() {
        for (j, &x) in row.iter().enumerate() {
            if x.is_infinite() {
                return Err(AnalyticError::KernelDivergent { theta: f64::NAN });
            }
            if !(x > 0.0) {
                return Err(AnalyticError::NotPositive { i, j, value: x });
            }
        }
    }
    let (rho, v, it_v) = power(m, false, opts)?;
    let (_, mut u, it_u) = power(m, true, opts)?;
    let dot: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
    for x in &mut u {
        *x /= dot;
    }
    Ok(PerronResult {
        rho,
        u,
        v,
        iterations: it_v + it_u,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_row_sums() {
        let r = perron(&[vec![2.0, 1.0], vec![1.0, 2.0]], &PerronOptions::default()).unwrap();
        assert!((r.rho - 3.0).abs() < 1e-12);
        assert!((r.v[0] - 0.5).abs() < 1e-12 && (r.v[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn constant_matrix() {
        let r = perron(&[vec![0.7; 2], vec![0.7; 2]], &PerronOptions::default()).unwrap();
        assert!((r.rho - 1.4).abs() < 1e-12);
        assert!((r.u[0] - r.u[1]).abs() < 1e-12);
        let dot: f64 = r.u.iter().zip(&r.v).map(|(a, b)| a * b).sum();
        assert!((dot - 1.0).abs() < 1e-12);
    }

    #[test]
    fn diagonal_rejected() {
        let err = perron(&[vec![2.0, 0.0], vec![0.0, 1.0]], &PerronOptions::default()).unwrap_err();
        assert!(matches!(err, AnalyticError::NotPositive { i: 0, j: 1, .. }));
    }

    #[test]
    fn infinite_rejected() {
        let err = perron(&[vec![f64::INFINITY, 1.0], vec![1.0, 1.0]], &PerronOptions::default()).unwrap_err();
        assert!(matches!(err, AnalyticError::KernelDivergent { .. }));
    }

    #[test]
    fn asymmetric_eigen_equations() {
        let m = vec![vec![1.0, 2.0, 0.5], vec![0.3, 0.2, 4.0], vec![1.5, 1.0, 1.0]];
        let r = perron(&m, &PerronOptions::default()).unwrap();
        for a in 0..3 {
            let mv: f64 = (0..3).map(|b| m[a][b] * r.v[b]).sum();
            let um: f64 = (0..3).map(|b| r.u[b] * m[b][a]).sum();
            assert!((mv - r.rho * r.v[a]).abs() < 1e-10);
            assert!((um - r.rho * r.u[a]).abs() < 1e-10);
        }
        assert!((r.v.iter().sum::<f64>() - 1.0).abs() < 1e-14);
    }
}
