use std::fmt::Write as _;

use serde::Serialize;

use super::fit::{fit_tail, TailFit, TailFitOptions};
use super::{empirical_composition, empirical_degree_hist, DegreeHistogram, DegreeMode, StatsError};
use crate::analytic::{
    composition_limit, degree_law_table, marginal_child_exponent, tail_exponent, AnalyticError, DegreeLawTable,
    MalthusianSolution, MarginalLaw, TailDescriptor,
};
use crate::rates::{RateFamily, RateSpec};
use crate::sim::{spec_fingerprint, TreeRecord};

/// Everything the analytic side predicts for one spec.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub alpha: f64,
    pub composition: Vec<f64>,
    /// Total-degree law, when rates depend on total degree only.
    pub degree_law: Option<DegreeLawTable>,
    /// Total-degree tail per type, for linear total-degree rates.
    pub tails: Vec<Option<TailDescriptor>>,
    /// Child-type marginals `[i * p + j]`, for separable rates.
    pub marginals: Vec<MarginalLaw>,
}

impl Prediction {
    pub fn new(spec: &RateSpec, sol: &MalthusianSolution, k_max: u32) -> Result<Self, AnalyticError> {
        let p = spec.p();
        let degree_law = if spec.depends_on_total_only() {
            Some(degree_law_table(spec, sol, k_max)?)
        } else {
            None
        };
        let tails = match spec.family() {
            RateFamily::LinearTotal { .. } => (0..p).map(|i| tail_exponent(spec, sol, i).map(Some)).collect::<Result<_, _>>()?,
            _ => vec![None; p],
        };
        let marginals = match spec.family() {
            RateFamily::SeparableLinear { .. } => (0..p * p)
                .map(|ij| marginal_child_exponent(spec, sol, ij / p, ij % p, k_max))
                .collect::<Result<_, _>>()?,
            _ => Vec::new(),
        };
        Ok(Self {
            alpha: sol.alpha,
            composition: composition_limit(sol),
            degree_law,
            tails,
            marginals,
        })
    }

    pub fn p(&self) -> usize {
        self.composition.len()
    }

    /// `alpha * u_i / sum(u) * sum_{n_j = k} I_i(n)`.
    pub fn marginal_fraction(&self, i: usize, j: usize, k: usize) -> Option<f64> {
        let law = self.marginals.get(i * self.p() + j)?;
        law.values.get(k).map(|v| self.alpha * self.composition[i] * v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompositionRow {
    pub type_index: usize,
    pub empirical: f64,
    pub theoretical: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DegreeRow {
    /// `degree` for total child counts, `child_j` (1-based) for marginals.
    pub kind: String,
    pub type_index: usize,
    pub k: u32,
    pub empirical: f64,
    pub theoretical: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailRow {
    pub kind: String,
    pub type_index: usize,
    pub fit: Result<TailFit, String>,
    pub theoretical: Option<f64>,
}

impl TailRow {
    pub fn fitted(&self) -> Option<f64> {
        self.fit.as_ref().ok().map(|f| f.exponent)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub composition: Vec<CompositionRow>,
    pub degree: Vec<DegreeRow>,
    pub tails: Vec<TailRow>,
    pub vertices: u64,
    pub replicas: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareOptions {
    /// Degree rows are reported for `k <= degree_rows`.
    pub degree_rows: u32,
    pub fit: TailFitOptions,
}

impl Default for CompareOptions {
    fn default() -> Self {
        Self {
            degree_rows: 20,
            fit: TailFitOptions::comparison(),
        }
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

impl ComparisonReport {
    pub fn composition_gap(&self) -> f64 {
        self.composition.iter().map(|r| r.gap).fold(0.0, f64::max)
    }

    pub fn tail(&self, kind: &str, type_index: usize) -> Option<&TailRow> {
        self.tails.iter().find(|t| t.kind == kind && t.type_index == type_index)
    }

    /// `kind,type,key,empirical,theoretical,gap` with 1-based types.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("kind,type,key,empirical,theoretical,gap\n");
        for r in &self.composition {
            let _ = writeln!(s, "composition,{},,{},{},{}", r.type_index + 1, r.empirical, r.theoretical, r.gap);
        }
        for r in &self.degree {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.kind,
                r.type_index + 1,
                r.k,
                r.empirical,
                r.theoretical,
                r.gap
            );
        }
        for r in &self.tails {
            let fitted = r.fitted();
            let gap = fitted.zip(r.theoretical).map(|(a, b)| (a - b).abs());
            let _ = writeln!(
                s,
                "tail_{},{},exponent,{},{},{}",
                r.kind,
                r.type_index + 1,
                fmt_opt(fitted),
                fmt_opt(r.theoretical),
                fmt_opt(gap)
            );
        }
        s
    }
}

fn pooled(records: &[TreeRecord], mode: DegreeMode) -> Result<DegreeHistogram, StatsError> {
    let hists = records
        .iter()
        .map(|r| empirical_degree_hist(r, mode))
        .collect::<Result<Vec<_>, _>>()?;
    DegreeHistogram::pool(&hists)
}

/// Compare replicas simulated from `spec` with its prediction.
pub fn compare(
    records: &[TreeRecord],
    spec: &RateSpec,
    pred: &Prediction,
    seed: u64,
    opts: &CompareOptions,
) -> Result<ComparisonReport, StatsError> {
    if records.is_empty() {
        return Err(StatsError::NoReplicas);
    }
    let fp = spec_fingerprint(spec);
    if records.iter().any(|r| r.spec_fingerprint != fp) {
        return Err(StatsError::SpecMismatch);
    }
    let p = spec.p();
    if pred.p() != p {
        return Err(StatsError::TypeCountMismatch);
    }

    let mut mean_comp = vec![0.0; p];
    for r in records {
        for (m, c) in mean_comp.iter_mut().zip(empirical_composition(r)) {
            *m += c / records.len() as f64;
        }
    }
    let composition = (0..p)
        .map(|i| CompositionRow {
            type_index: i,
            empirical: mean_comp[i],
            theoretical: pred.composition[i],
            gap: (mean_comp[i] - pred.composition[i]).abs(),
        })
        .collect();

    let mut degree = Vec::new();
    let mut tails = Vec::new();
    if let Some(law) = &pred.degree_law {
        let hist = pooled(records, DegreeMode::Total)?;
        for i in 0..p {
            for k in 0..=opts.degree_rows.min(law.k_max() as u32) {
                let e = hist.fraction(i, &[k]);
                let t = law.limit_fraction(i, k as usize);
                degree.push(DegreeRow {
                    kind: "degree".into(),
                    type_index: i,
                    k,
                    empirical: e,
                    theoretical: t,
                    gap: (e - t).abs(),
                });
            }
            tails.push(TailRow {
                kind: "degree".into(),
                type_index: i,
                fit: fit_tail(&hist.series(i), &opts.fit).map_err(|e| e.to_string()),
                theoretical: pred.tails[i].and_then(|d| d.exponent()),
            });
        }
    }
    if !pred.marginals.is_empty() {
        for j in 0..p {
            let hist = pooled(records, DegreeMode::Child(j))?;
            let kind = format!("child_{}", j + 1);
            for i in 0..p {
                for k in 0..=opts.degree_rows {
                    let Some(t) = pred.marginal_fraction(i, j, k as usize) else { break };
                    let e = hist.fraction(i, &[k]);
                    degree.push(DegreeRow {
                        kind: kind.clone(),
                        type_index: i,
                        k,
                        empirical: e,
                        theoretical: t,
                        gap: (e - t).abs(),
                    });
                }
                tails.push(TailRow {
                    kind: kind.clone(),
                    type_index: i,
                    fit: fit_tail(&hist.series(i), &opts.fit).map_err(|e| e.to_string()),
                    theoretical: pred.marginals[i * p + j].descriptor.exponent(),
                });
            }
        }
    }
    Ok(ComparisonReport {
        composition,
        degree,
        tails,
        vertices: records.iter().map(|r| r.len() as u64).sum(),
        replicas: records.len(),
        seed,
    })
}
