//! Empirical measurements on simulated trees and their comparison with the
//! analytic predictions.
//!
//! Degrees are child counts (in-degree) throughout. Replicas are pooled by
//! averaging per-key fractions, so each replica weighs the same.

mod compare;
mod fit;

pub use compare::{compare, CompareOptions, ComparisonReport, CompositionRow, DegreeRow, Prediction, TailRow};
pub use fit::{fit_tail, TailFit, TailFitMethod, TailFitOptions};

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::sim::TreeRecord;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("no replicas to compare")]
    NoReplicas,
    #[error("record was simulated from a different rate spec")]
    SpecMismatch,
    #[error("records disagree on the number of types")]
    TypeCountMismatch,
    #[error("insufficient support: {points} usable points in [{k_min}, {k_max}], need {needed}")]
    InsufficientSupport {
        points: usize,
        k_min: u32,
        k_max: u32,
        needed: usize,
    },
    #[error("child type {j} out of range for {p} types")]
    BadChildType { j: usize, p: usize },
}

/// Fraction of vertices of each type.
pub fn empirical_composition(record: &TreeRecord) -> Vec<f64> {
    let mut counts = vec![0u64; record.p];
    for &t in &record.types {
        counts[t as usize] += 1;
    }
    let n = record.len() as f64;
    counts.into_iter().map(|c| c as f64 / n).collect()
}

/// What a histogram is keyed on besides the vertex type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DegreeMode {
    /// Total number of children.
    Total,
    /// Full child-count vector.
    Vector,
    /// Number of children of the given type.
    Child(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HistEntry {
    pub count: u64,
    /// Fraction of all vertices (averaged over replicas when pooled).
    pub fraction: f64,
}

/// Joint histogram over (vertex type, degree key). Fractions are relative
/// to the whole tree, so they sum to one over all types.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DegreeHistogram {
    pub mode: DegreeMode,
    pub p: usize,
    pub vertices: u64,
    pub replicas: usize,
    #[serde(skip)]
    pub entries: BTreeMap<(usize, Vec<u32>), HistEntry>,
}

pub fn empirical_degree_hist(record: &TreeRecord, mode: DegreeMode) -> Result<DegreeHistogram, StatsError> {
    if let DegreeMode::Child(j) = mode {
        if j >= record.p {
            return Err(StatsError::BadChildType { j, p: record.p });
        }
    }
    let mut counts: BTreeMap<(usize, Vec<u32>), u64> = BTreeMap::new();
    for v in 0..record.len() {
        let key = match mode {
            DegreeMode::Total => vec![record.child_total(v)],
            DegreeMode::Vector => record.children(v).to_vec(),
            DegreeMode::Child(j) => vec![record.children(v)[j]],
        };
        *counts.entry((record.vertex_type(v), key)).or_default() += 1;
    }
    let n = record.len() as f64;
    Ok(DegreeHistogram {
        mode,
        p: record.p,
        vertices: record.len() as u64,
        replicas: 1,
        entries: counts
            .into_iter()
            .map(|(k, c)| {
                (
                    k,
                    HistEntry {
                        count: c,
                        fraction: c as f64 / n,
                    },
                )
            })
            .collect(),
    })
}

impl DegreeHistogram {
    /// Pool by averaging fractions; counts are summed.
    pub fn pool(hists: &[DegreeHistogram]) -> Result<DegreeHistogram, StatsError> {
        let first = hists.first().ok_or(StatsError::NoReplicas)?;
        if hists.iter().any(|h| h.p != first.p || h.mode != first.mode) {
            return Err(StatsError::TypeCountMismatch);
        }
        let total_reps: usize = hists.iter().map(|h| h.replicas).sum();
        let mut entries: BTreeMap<(usize, Vec<u32>), HistEntry> = BTreeMap::new();
        for h in hists {
            let w = h.replicas as f64 / total_reps as f64;
            for (key, e) in &h.entries {
                let slot = entries.entry(key.clone()).or_insert(HistEntry {
                    count: 0,
                    fraction: 0.0,
                });
                slot.count += e.count;
                slot.fraction += w * e.fraction;
            }
        }
        Ok(DegreeHistogram {
            mode: first.mode,
            p: first.p,
            vertices: hists.iter().map(|h| h.vertices).sum(),
            replicas: total_reps,
            entries,
        })
    }

    pub fn fraction(&self, i: usize, key: &[u32]) -> f64 {
        self.entries.get(&(i, key.to_vec())).map_or(0.0, |e| e.fraction)
    }

    pub fn total_fraction(&self) -> f64 {
        self.entries.values().map(|e| e.fraction).sum()
    }

    /// `(k, fraction, count)` for type `i`, increasing in `k`. Only for
    /// scalar keys.
    pub fn series(&self, i: usize) -> Vec<(u32, f64, u64)> {
        self.entries
            .range((i, Vec::new())..(i + 1, Vec::new()))
            .filter(|((_, key), _)| key.len() == 1)
            .map(|((_, key), e)| (key[0], e.fraction, e.count))
            .collect()
    }

    /// Series over all types together.
    pub fn merged_series(&self) -> Vec<(u32, f64, u64)> {
        let mut acc: BTreeMap<u32, (f64, u64)> = BTreeMap::new();
        for ((_, key), e) in &self.entries {
            if key.len() == 1 {
                let slot = acc.entry(key[0]).or_default();
                slot.0 += e.fraction;
                slot.1 += e.count;
            }
        }
        acc.into_iter().map(|(k, (f, c))| (k, f, c)).collect()
    }
}
