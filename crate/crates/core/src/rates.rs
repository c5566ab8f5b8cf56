//! Attachment rate families.
//!
//! A type-`i` vertex holding child-count vector `n` (entry `l` = number of
//! type-`l` children) produces a type-`j` child at rate `w_ij(n)`. Three
//! families are supported:
//!
//! * [`RateFamily::LinearTotal`]: `w_ij(n) = gamma_ij * (n_1 + .. + n_p) + beta_ij`
//! * [`RateFamily::SeparableLinear`]: `w_ij(n) = gamma_ij * n_j + beta_ij`
//! * [`RateFamily::GeneralTable`]: explicit values on a bounded box of the
//!   lattice, either keyed by the full vector or by total degree only.
//!
//! Type indices are 0-based in this API. The JSON form (used by the CLI
//! configs) is 1-based for table entries.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RateError {
    #[error("number of types must be positive")]
    NoTypes,
    #[error("type index {index} out of range for p = {p}")]
    TypeOutOfRange { index: usize, p: usize },
    #[error("child-count vector has length {got}, expected {p}")]
    WrongArity { got: usize, p: usize },
    #[error("{name} must be a {p}x{p} matrix")]
    BadShape { name: &'static str, p: usize },
    #[error("beta[{i}][{j}] = {value} must be strictly positive and finite")]
    NonPositiveBeta { i: usize, j: usize, value: f64 },
    #[error("gamma[{i}][{j}] = {value} must be nonnegative and finite")]
    NegativeGamma { i: usize, j: usize, value: f64 },
    #[error("table rate for (i={i}, j={j}) at {n:?} = {value} must be strictly positive and finite")]
    NonPositiveTableRate {
        i: usize,
        j: usize,
        n: Vec<u32>,
        value: f64,
    },
    #[error("table cell (i={i}, j={j}) at {n:?} has no value and no default")]
    MissingTableCell { i: usize, j: usize, n: Vec<u32> },
    #[error("table box of {cells} cells exceeds the limit of {limit}")]
    TableTooLarge { cells: usize, limit: usize },
    #[error("child counts {n:?} lie outside the declared table box {bound} and the extension rule is 'error'")]
    OutsideTable { n: Vec<u32>, bound: u32 },
    #[error("only the linear families have gamma/beta coefficients")]
    NotLinear,
    #[error("general table rates require `nonexplosive_assertion: true`; a finite table cannot certify that sum_n 1/w(n) diverges")]
    ExplosionUnverified,
}

/// How a rate table behaves for child counts beyond its declared box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Extension {
    /// Lookups outside the box fail.
    #[default]
    Error,
    /// Coordinates are clamped to the box boundary.
    Frozen,
}

/// Coefficient selector for [`RateSpec::with_coefficient`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coefficient {
    Gamma,
    Beta,
}

/// Whether table rates are keyed by the full child vector or its total only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dependence {
    Vector,
    TotalDegree,
}

/// Tabulated rates on the box `{n : n_l <= bound}` (vector dependence) or
/// `{k <= bound}` (total-degree dependence).
#[derive(Debug, Clone, PartialEq)]
pub struct RateTable {
    dependence: Dependence,
    bound: u32,
    extension: Extension,
    nonexplosive_assertion: bool,
    // [i][j][cell] flattened; cell is mixed-radix over the box or k.
    values: Vec<f64>,
    cells: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RateFamily {
    LinearTotal { gamma: Vec<Vec<f64>>, beta: Vec<Vec<f64>> },
    SeparableLinear { gamma: Vec<Vec<f64>>, beta: Vec<Vec<f64>> },
    GeneralTable(RateTable),
}

/// Immutable description of the rate family `{w_ij}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RateSpecDef", into = "RateSpecDef")]
pub struct RateSpec {
    p: usize,
    family: RateFamily,
}

/// Largest number of stored table values accepted.
pub const MAX_TABLE_CELLS: usize = 50_000_000;

/// Outcome of the non-explosion check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Certificate {
    /// Rates grow at most linearly in total degree, so the reciprocal sum diverges.
    LinearGrowth,
    /// A frozen table has finitely many distinct rates, hence bounded ones.
    BoundedRates,
    /// The user asserted non-explosion for a tabulated family.
    UserAsserted,
}

fn check_square(m: &[Vec<f64>], p: usize, name: &'static str) -> Result<(), RateError> {
    if m.len() != p || m.iter().any(|row| row.len() != p) {
        return Err(RateError::BadShape { name, p });
    }
    Ok(())
}

fn check_linear(gamma: &[Vec<f64>], beta: &[Vec<f64>], p: usize) -> Result<(), RateError> {
    check_square(gamma, p, "gamma")?;
    check_square(beta, p, "beta")?;
    for i in 0..p {
        for j in 0..p {
            let g = gamma[i][j];
            if !(g.is_finite() && g >= 0.0) {
                return Err(RateError::NegativeGamma { i, j, value: g });
            }
            let b = beta[i][j];
            if !(b.is_finite() && b > 0.0) {
                return Err(RateError::NonPositiveBeta { i, j, value: b });
            }
        }
    }
    Ok(())
}

impl RateSpec {
    pub fn linear_total(gamma: Vec<Vec<f64>>, beta: Vec<Vec<f64>>) -> Result<Self, RateError> {
        let p = gamma.len();
        if p == 0 {
            return Err(RateError::NoTypes);
        }
        check_linear(&gamma, &beta, p)?;
        Ok(Self {
            p,
            family: RateFamily::LinearTotal { gamma, beta },
        })
    }

    pub fn separable_linear(gamma: Vec<Vec<f64>>, beta: Vec<Vec<f64>>) -> Result<Self, RateError> {
        let p = gamma.len();
        if p == 0 {
            return Err(RateError::NoTypes);
        }
        check_linear(&gamma, &beta, p)?;
        Ok(Self {
            p,
            family: RateFamily::SeparableLinear { gamma, beta },
        })
    }

    /// Build a table by evaluating `f(i, j, n)` on every cell of the box.
    ///
    /// For [`Dependence::TotalDegree`] the closure receives a one-element
    /// slice holding the total degree `k`.
    pub fn tabulate<F>(
        p: usize,
        dependence: Dependence,
        bound: u32,
        extension: Extension,
        nonexplosive_assertion: bool,
        mut f: F,
    ) -> Result<Self, RateError>
    where
        F: FnMut(usize, usize, &[u32]) -> f64,
    {
        if p == 0 {
            return Err(RateError::NoTypes);
        }
        let cells = table_cells(p, dependence, bound)?;
        let mut values = Vec::with_capacity(p * p * cells);
        let mut n = vec![0u32; if dependence == Dependence::Vector { p } else { 1 }];
        for i in 0..p {
            for j in 0..p {
                for c in 0..cells {
                    decode_cell(c, bound, &mut n);
                    let v = f(i, j, &n);
                    if !(v.is_finite() && v > 0.0) {
                        return Err(RateError::NonPositiveTableRate {
                            i,
                            j,
                            n: n.clone(),
                            value: v,
                        });
                    }
                    values.push(v);
                }
            }
        }
        Ok(Self {
            p,
            family: RateFamily::GeneralTable(RateTable {
                dependence,
                bound,
                extension,
                nonexplosive_assertion,
                values,
                cells,
            }),
        })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn family(&self) -> &RateFamily {
        &self.family
    }

    pub fn is_general_table(&self) -> bool {
        matches!(self.family, RateFamily::GeneralTable(_))
    }

    /// True when `w_ij(n)` depends on `n` only through `n_1 + .. + n_p`.
    pub fn depends_on_total_only(&self) -> bool {
        match &self.family {
            RateFamily::LinearTotal { .. } => true,
            RateFamily::SeparableLinear { gamma, .. } => {
                self.p == 1 || gamma.iter().flatten().all(|&g| g == 0.0)
            }
            RateFamily::GeneralTable(t) => t.dependence == Dependence::TotalDegree || self.p == 1,
        }
    }

    /// `(gamma, beta)` for the two linear families.
    pub fn linear_params(&self) -> Option<(&[Vec<f64>], &[Vec<f64>])> {
        match &self.family {
            RateFamily::LinearTotal { gamma, beta } | RateFamily::SeparableLinear { gamma, beta } => {
                Some((gamma, beta))
            }
            RateFamily::GeneralTable(_) => None,
        }
    }

    /// Copy with one `gamma_ij` or `beta_ij` replaced.
    pub fn with_coefficient(&self, which: Coefficient, i: usize, j: usize, value: f64) -> Result<Self, RateError> {
        self.check_type(i)?;
        self.check_type(j)?;
        let (mut gamma, mut beta) = match &self.family {
            RateFamily::LinearTotal { gamma, beta } | RateFamily::SeparableLinear { gamma, beta } => {
                (gamma.clone(), beta.clone())
            }
            RateFamily::GeneralTable(_) => return Err(RateError::NotLinear),
        };
        match which {
            Coefficient::Gamma => gamma[i][j] = value,
            Coefficient::Beta => beta[i][j] = value,
        }
        match self.family {
            RateFamily::SeparableLinear { .. } => Self::separable_linear(gamma, beta),
            _ => Self::linear_total(gamma, beta),
        }
    }

    fn check_type(&self, i: usize) -> Result<(), RateError> {
        if i >= self.p {
            return Err(RateError::TypeOutOfRange { index: i, p: self.p });
        }
        Ok(())
    }

    fn check_arity(&self, n: &[u32]) -> Result<(), RateError> {
        if n.len() != self.p {
            return Err(RateError::WrongArity { got: n.len(), p: self.p });
        }
        Ok(())
    }

    /// `w_ij(n)`.
    pub fn eval_rate(&self, i: usize, j: usize, n: &[u32]) -> Result<f64, RateError> {
        self.check_type(i)?;
        self.check_type(j)?;
        self.check_arity(n)?;
        match &self.family {
            RateFamily::LinearTotal { gamma, beta } => {
                let k: u64 = n.iter().map(|&x| x as u64).sum();
                Ok(gamma[i][j] * k as f64 + beta[i][j])
            }
            RateFamily::SeparableLinear { gamma, beta } => Ok(gamma[i][j] * n[j] as f64 + beta[i][j]),
            RateFamily::GeneralTable(t) => {
                let cell = t.cell_of(n)?;
                Ok(t.values[(i * self.p + j) * t.cells + cell])
            }
        }
    }

    /// `w_i(n) = sum_j w_ij(n)`.
    pub fn total_rate(&self, i: usize, n: &[u32]) -> Result<f64, RateError> {
        self.check_type(i)?;
        self.check_arity(n)?;
        let mut s = 0.0;
        for j in 0..self.p {
            s += self.eval_rate(i, j, n)?;
        }
        Ok(s)
    }

    /// Fill `out[j] = w_ij(n)` for all `j` and return their sum.
    ///
    /// Same arithmetic as [`eval_rate`](Self::eval_rate) and
    /// [`total_rate`](Self::total_rate); used on hot paths.
    pub fn rate_row(&self, i: usize, n: &[u32], out: &mut [f64]) -> Result<f64, RateError> {
        self.check_type(i)?;
        self.check_arity(n)?;
        let mut s = 0.0;
        match &self.family {
            RateFamily::LinearTotal { gamma, beta } => {
                let k = n.iter().map(|&x| x as u64).sum::<u64>() as f64;
                for j in 0..self.p {
                    out[j] = gamma[i][j] * k + beta[i][j];
                    s += out[j];
                }
            }
            RateFamily::SeparableLinear { gamma, beta } => {
                for j in 0..self.p {
                    out[j] = gamma[i][j] * n[j] as f64 + beta[i][j];
                    s += out[j];
                }
            }
            RateFamily::GeneralTable(t) => {
                let cell = t.cell_of(n)?;
                for j in 0..self.p {
                    out[j] = t.values[(i * self.p + j) * t.cells + cell];
                    s += out[j];
                }
            }
        }
        Ok(s)
    }

    /// `w_ij` as a function of total degree `k`; only meaningful when
    /// [`depends_on_total_only`](Self::depends_on_total_only) holds.
    pub fn total_degree_rate(&self, i: usize, j: usize, k: u32) -> Result<f64, RateError> {
        match &self.family {
            RateFamily::GeneralTable(t) if t.dependence == Dependence::TotalDegree => {
                self.check_type(i)?;
                self.check_type(j)?;
                let cell = t.cell_of(&[k])?;
                Ok(t.values[(i * self.p + j) * t.cells + cell])
            }
            _ => {
                let mut n = vec![0u32; self.p];
                n[0] = k;
                self.eval_rate(i, j, &n)
            }
        }
    }

    /// Smallest total degree from which every `w_ij(k)` (total-degree view)
    /// is affine in `k`, when the family guarantees one.
    pub fn affine_from(&self) -> Option<u32> {
        if !self.depends_on_total_only() {
            return None;
        }
        match &self.family {
            RateFamily::LinearTotal { .. } | RateFamily::SeparableLinear { .. } => Some(0),
            RateFamily::GeneralTable(t) => match t.extension {
                Extension::Frozen => Some(t.bound),
                Extension::Error => None,
            },
        }
    }

    /// Certifies `sum_n 1/w(n) = infinity`, i.e. the per-vertex birth chain
    /// cannot explode.
    pub fn check_nonexplosion(&self) -> Result<Certificate, RateError> {
        match &self.family {
            RateFamily::LinearTotal { .. } | RateFamily::SeparableLinear { .. } => Ok(Certificate::LinearGrowth),
            RateFamily::GeneralTable(t) if t.extension == Extension::Frozen => Ok(Certificate::BoundedRates),
            RateFamily::GeneralTable(t) if t.nonexplosive_assertion => Ok(Certificate::UserAsserted),
            RateFamily::GeneralTable(_) => Err(RateError::ExplosionUnverified),
        }
    }

    /// Largest `w_i(n)` over `{n : |n| <= cap}`, used to bound explicit steps.
    pub fn max_total_rate_within(&self, cap: u32) -> Result<f64, RateError> {
        let mut best: f64 = 0.0;
        match &self.family {
            RateFamily::LinearTotal { gamma, beta } => {
                for i in 0..self.p {
                    let g: f64 = gamma[i].iter().sum();
                    let b: f64 = beta[i].iter().sum();
                    best = best.max(g * cap as f64 + b);
                }
            }
            RateFamily::SeparableLinear { gamma, beta } => {
                for i in 0..self.p {
                    let g = gamma[i].iter().cloned().fold(0.0, f64::max);
                    let b: f64 = beta[i].iter().sum();
                    best = best.max(g * cap as f64 + b);
                }
            }
            RateFamily::GeneralTable(t) => {
                // Every reachable cell lies in the box (frozen) or errors.
                for i in 0..self.p {
                    for c in 0..t.cells {
                        let s: f64 = (0..self.p).map(|j| t.values[(i * self.p + j) * t.cells + c]).sum();
                        best = best.max(s);
                    }
                }
            }
        }
        Ok(best)
    }
}

fn table_cells(p: usize, dependence: Dependence, bound: u32) -> Result<usize, RateError> {
    let side = bound as usize + 1;
    let cells = match dependence {
        Dependence::TotalDegree => Some(side),
        Dependence::Vector => (0..p).try_fold(1usize, |acc, _| acc.checked_mul(side)),
    };
    match cells.and_then(|c| c.checked_mul(p * p)) {
        Some(total) if total <= MAX_TABLE_CELLS => Ok(cells.unwrap()),
        _ => Err(RateError::TableTooLarge {
            cells: cells.unwrap_or(usize::MAX).saturating_mul(p * p),
            limit: MAX_TABLE_CELLS,
        }),
    }
}

// Mixed radix, first coordinate most significant.
fn decode_cell(mut c: usize, bound: u32, n: &mut [u32]) {
    let side = bound as usize + 1;
    for slot in n.iter_mut().rev() {
        *slot = (c % side) as u32;
        c /= side;
    }
}

impl RateTable {
    fn cell_of(&self, n: &[u32]) -> Result<usize, RateError> {
        let side = self.bound as usize + 1;
        let clamp = |x: u32| -> Result<usize, RateError> {
            if x <= self.bound {
                Ok(x as usize)
            } else {
                match self.extension {
                    Extension::Frozen => Ok(self.bound as usize),
                    Extension::Error => Err(RateError::OutsideTable {
                        n: n.to_vec(),
                        bound: self.bound,
                    }),
                }
            }
        };
        match self.dependence {
            Dependence::TotalDegree => {
                let k: u64 = n.iter().map(|&x| x as u64).sum();
                clamp(k.min(u32::MAX as u64) as u32)
            }
            Dependence::Vector => {
                let mut c = 0usize;
                for &x in n {
                    c = c * side + clamp(x)?;
                }
                Ok(c)
            }
        }
    }

    pub fn dependence(&self) -> Dependence {
        self.dependence
    }

    pub fn bound(&self) -> u32 {
        self.bound
    }

    pub fn extension(&self) -> Extension {
        self.extension
    }
}

// ---------------------------------------------------------------------------
// JSON form

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RateSpecDef {
    p: usize,
    #[serde(flatten)]
    family: FamilyDef,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
enum FamilyDef {
    LinearTotal {
        gamma: Vec<Vec<f64>>,
        beta: Vec<Vec<f64>>,
    },
    SeparableLinear {
        gamma: Vec<Vec<f64>>,
        beta: Vec<Vec<f64>>,
    },
    GeneralTable {
        table: TableDef,
        #[serde(default)]
        nonexplosive_assertion: bool,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TableDef {
    dependence: Dependence,
    #[serde(rename = "box")]
    bound: u32,
    #[serde(default)]
    extension: Extension,
    /// Fill value for cells without an explicit entry.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    default: Option<f64>,
    /// Total-degree tables only: `values[i][j][k]`, 0-based positions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    values: Option<Vec<Vec<Vec<f64>>>>,
    /// Sparse entries with 1-based type indices.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    entries: Vec<TableEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TableEntry {
    i: usize,
    j: usize,
    n: Vec<u32>,
    rate: f64,
}

impl TryFrom<RateSpecDef> for RateSpec {
    type Error = RateError;

    fn try_from(def: RateSpecDef) -> Result<Self, RateError> {
        let p = def.p;
        if p == 0 {
            return Err(RateError::NoTypes);
        }
        let spec = match def.family {
            FamilyDef::LinearTotal { gamma, beta } => Self::linear_total(gamma, beta)?,
            FamilyDef::SeparableLinear { gamma, beta } => Self::separable_linear(gamma, beta)?,
            FamilyDef::GeneralTable {
                table,
                nonexplosive_assertion,
            } => table_from_def(p, table, nonexplosive_assertion)?,
        };
        if spec.p != p {
            return Err(RateError::BadShape { name: "gamma", p });
        }
        Ok(spec)
    }
}

fn table_from_def(p: usize, def: TableDef, assertion: bool) -> Result<RateSpec, RateError> {
    let cells = table_cells(p, def.dependence, def.bound)?;
    let mut slots: Vec<Option<f64>> = vec![def.default; p * p * cells];
    if let Some(values) = &def.values {
        if def.dependence != Dependence::TotalDegree {
            return Err(RateError::BadShape { name: "table.values", p });
        }
        if values.len() != p || values.iter().any(|r| r.len() != p) {
            return Err(RateError::BadShape { name: "table.values", p });
        }
        for i in 0..p {
            for j in 0..p {
                for (k, &v) in values[i][j].iter().enumerate().take(cells) {
                    slots[(i * p + j) * cells + k] = Some(v);
                }
            }
        }
    }
    let side = def.bound as usize + 1;
    for e in &def.entries {
        if e.i == 0 || e.i > p {
            return Err(RateError::TypeOutOfRange { index: e.i, p });
        }
        if e.j == 0 || e.j > p {
            return Err(RateError::TypeOutOfRange { index: e.j, p });
        }
        let coords: &[u32] = &e.n;
        let cell = match def.dependence {
            Dependence::TotalDegree => {
                if coords.len() != 1 {
                    return Err(RateError::WrongArity { got: coords.len(), p: 1 });
                }
                coords[0] as usize
            }
            Dependence::Vector => {
                if coords.len() != p {
                    return Err(RateError::WrongArity { got: coords.len(), p });
                }
                coords.iter().fold(0usize, |c, &x| c * side + x as usize)
            }
        };
        if coords.iter().any(|&x| x > def.bound) {
            return Err(RateError::OutsideTable {
                n: coords.to_vec(),
                bound: def.bound,
            });
        }
        slots[((e.i - 1) * p + (e.j - 1)) * cells + cell] = Some(e.rate);
    }
    let width = if def.dependence == Dependence::Vector { p } else { 1 };
    let mut n = vec![0u32; width];
    let mut missing = None;
    let spec = RateSpec::tabulate(p, def.dependence, def.bound, def.extension, assertion, |i, j, cell_n| {
        let c = cell_n.iter().fold(0usize, |c, &x| c * side + x as usize);
        match slots[(i * p + j) * cells + c] {
            Some(v) => v,
            None => {
                if missing.is_none() {
                    n.copy_from_slice(cell_n);
                    missing = Some((i, j));
                }
                1.0
            }
        }
    })?;
    if let Some((i, j)) = missing {
        return Err(RateError::MissingTableCell { i, j, n });
    }
    Ok(spec)
}

impl From<RateSpec> for RateSpecDef {
    fn from(spec: RateSpec) -> Self {
        let p = spec.p;
        let family = match spec.family {
            RateFamily::LinearTotal { gamma, beta } => FamilyDef::LinearTotal { gamma, beta },
            RateFamily::SeparableLinear { gamma, beta } => FamilyDef::SeparableLinear { gamma, beta },
            RateFamily::GeneralTable(t) => {
                let (values, entries) = match t.dependence {
                    Dependence::TotalDegree => {
                        let values = (0..p)
                            .map(|i| {
                                (0..p)
                                    .map(|j| t.values[(i * p + j) * t.cells..(i * p + j + 1) * t.cells].to_vec())
                                    .collect()
                            })
                            .collect();
                        (Some(values), Vec::new())
                    }
                    Dependence::Vector => {
                        let mut entries = Vec::with_capacity(t.values.len());
                        let mut n = vec![0u32; p];
                        for i in 0..p {
                            for j in 0..p {
                                for c in 0..t.cells {
                                    decode_cell(c, t.bound, &mut n);
                                    entries.push(TableEntry {
                                        i: i + 1,
                                        j: j + 1,
                                        n: n.clone(),
                                        rate: t.values[(i * p + j) * t.cells + c],
                                    });
                                }
                            }
                        }
                        (None, entries)
                    }
                };
                FamilyDef::GeneralTable {
                    table: TableDef {
                        dependence: t.dependence,
                        bound: t.bound,
                        extension: t.extension,
                        default: None,
                        values,
                        entries,
                    },
                    nonexplosive_assertion: t.nonexplosive_assertion,
                }
            }
        };
        RateSpecDef { p, family }
    }
}
