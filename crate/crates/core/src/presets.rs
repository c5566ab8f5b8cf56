//! Reference rate specs.
//!
//! The two-type families below are linear in total degree with every rate
//! `k + 1` except for one swept entry (or, for the boosted family, larger
//! constants on type-2 births).

use crate::rates::RateSpec;

/// Grid used for the two-type parameter sweeps.
pub const SWEEP_GRID: [f64; 5] = [0.25, 0.5, 1.0, 2.0, 4.0];

/// `w_11 = g k + 1`, every other rate `k + 1`.
pub fn self_attachment(g: f64) -> RateSpec {
    RateSpec::linear_total(vec![vec![g, 1.0], vec![1.0, 1.0]], vec![vec![1.0; 2]; 2])
        .expect("valid for g >= 0")
}

/// `w_12 = g k + 1`, every other rate `k + 1`.
pub fn cross_attachment(g: f64) -> RateSpec {
    RateSpec::linear_total(vec![vec![1.0, g], vec![1.0, 1.0]], vec![vec![1.0; 2]; 2])
        .expect("valid for g >= 0")
}

/// `w_11 = g k + 1`, `w_12 = w_22 = k + 10`, `w_21 = k + 1`.
pub fn boosted_type2(g: f64) -> RateSpec {
    RateSpec::linear_total(vec![vec![g, 1.0], vec![1.0, 1.0]], vec![vec![1.0, 10.0], vec![1.0, 10.0]])
        .expect("valid for g >= 0")
}

/// One type, `w(k) = k + 1`: the preferential-attachment tree.
pub fn barabasi_albert() -> RateSpec {
    RateSpec::linear_total(vec![vec![1.0]], vec![vec![1.0]]).expect("valid")
}

/// One type, `w(k) = 1`: the random recursive tree.
pub fn random_recursive() -> RateSpec {
    RateSpec::linear_total(vec![vec![0.0]], vec![vec![1.0]]).expect("valid")
}

/// Two types, `w_ij(n) = n_j + 1` for all `i, j`.
pub fn separable_symmetric() -> RateSpec {
    RateSpec::separable_linear(vec![vec![1.0; 2]; 2], vec![vec![1.0; 2]; 2]).expect("valid")
}
