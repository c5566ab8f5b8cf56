use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use super::config::RunConfig;
use super::svg::{Plot, Series, Style};
use super::CliError;
use crate::analytic::{
    laplace_kernel, laplace_kernel_lattice, malthusian, tail_constant, AnalyticError, LatticeBounds, LatticeTable,
    MalthusianSolution, TailDescriptor,
};
use crate::oracle::{default_t_max, integrate_forward, laplace_quadrature, ForwardOptions};
use crate::rates::{RateFamily, RateSpec};
use crate::sim::{simulate_replicas, SimOptions, TreeRecord};
use crate::stats::{
    compare, empirical_composition, empirical_degree_hist, CompareOptions, ComparisonReport, DegreeHistogram,
    DegreeMode, Prediction,
};

/// Cells allowed in the vector-lattice table written by `analyze`.
const VECTOR_TABLE_CELLS: u64 = 1_000_000;

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|source| CliError::Io { path, source })
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data serializes");
    s.push('\n');
    s
}

fn fmt_opt(x: Option<f64>) -> String {
    match x {
        Some(v) => v.to_string(),
        None => "inf".into(),
    }
}

fn sim_options(cfg: &RunConfig) -> SimOptions {
    SimOptions {
        event_guard: cfg.simulation.event_guard,
    }
}

/// Largest `K <= cap` whose simplex `{|n| <= K}` in `p` dimensions has at
/// most `limit` cells.
fn simplex_cap(p: usize, cap: u32, limit: u64) -> u32 {
    let cells = |k: u32| -> u64 {
        // C(k + p, p), saturating.
        let mut c: u64 = 1;
        for l in 1..=p as u64 {
            c = c.saturating_mul(k as u64 + l) / l;
        }
        c
    };
    let mut k = cap;
    while k > 0 && cells(k) > limit {
        k -= 1;
    }
    k
}

#[derive(Debug, Clone, Serialize)]
struct MalthusianReport<'a> {
    alpha: f64,
    u: &'a [f64],
    v: &'a [f64],
    composition: &'a [f64],
    rho_residual: f64,
    bisection_iterations: usize,
    power_iterations: usize,
    /// Total-degree tail per type (linear total-degree rates).
    tails: &'a [Option<TailDescriptor>],
    /// Fitted prefactor of the power-law tail, per type.
    tail_constants: Vec<Option<f64>>,
    /// `[i][j]` tail of the type-`j` child count of a type-`i` vertex
    /// (separable rates).
    marginal_tails: Vec<Vec<TailDescriptor>>,
    lattice_cap: u32,
}

/// What `analyze` computed, for callers that want more than the files.
#[derive(Debug, Clone)]
pub struct AnalyzeOutput {
    pub solution: MalthusianSolution,
    pub prediction: Prediction,
}

fn analyze_spec(spec: &RateSpec, cfg: &RunConfig) -> Result<AnalyzeOutput, CliError> {
    let solution = malthusian(spec, &cfg.malthusian_options())?;
    let prediction = Prediction::new(spec, &solution, cfg.analysis.lattice_cap)?;
    Ok(AnalyzeOutput { solution, prediction })
}

fn kernel_csv(spec: &RateSpec, cfg: &RunConfig, alpha: f64) -> Result<String, CliError> {
    let opts = cfg.malthusian_options().kernel;
    let p = spec.p();
    let mut s = String::from("theta,i,j,value\n");
    for &theta in cfg.analysis.theta_grid.iter().chain(std::iter::once(&alpha)) {
        let entries: Vec<Option<f64>> = match laplace_kernel(spec, theta, &opts) {
            Ok(km) => (0..p * p).map(|ij| km.get(ij / p, ij % p)).collect(),
            Err(AnalyticError::KernelDivergent { .. }) => vec![None; p * p],
            Err(e) => return Err(e.into()),
        };
        for (ij, v) in entries.into_iter().enumerate() {
            let _ = writeln!(s, "{theta},{},{},{}", ij / p + 1, ij % p + 1, fmt_opt(v));
        }
    }
    Ok(s)
}

fn degree_law_csv(spec: &RateSpec, cfg: &RunConfig, out: &AnalyzeOutput) -> Result<String, CliError> {
    let mut s = String::from("type,key,I,limit_fraction\n");
    let pred = &out.prediction;
    if let Some(law) = &pred.degree_law {
        for i in 0..spec.p() {
            for k in 0..=law.k_max() {
                let _ = writeln!(s, "{},{k},{},{}", i + 1, law.values[i][k], law.limit_fraction(i, k));
            }
        }
    } else {
        // Keys are child-count vectors `n_1;..;n_p`.
        let cap = simplex_cap(spec.p(), cfg.analysis.lattice_cap, VECTOR_TABLE_CELLS);
        for i in 0..spec.p() {
            let table = LatticeTable::compute(spec, i, pred.alpha, LatticeBounds::Total(cap))?;
            let weight = pred.alpha * pred.composition[i];
            table.for_each(|n, v| {
                let key: Vec<String> = n.iter().map(u32::to_string).collect();
                let _ = writeln!(s, "{},{},{v},{}", i + 1, key.join(";"), weight * v);
            });
        }
    }
    Ok(s)
}

pub fn cmd_analyze(cfg: &RunConfig) -> Result<AnalyzeOutput, CliError> {
    let spec = &cfg.spec;
    let out = analyze_spec(spec, cfg)?;
    let sol = &out.solution;
    let pred = &out.prediction;
    let p = spec.p();

    let tail_constants = match spec.family() {
        RateFamily::LinearTotal { .. } => (0..p).map(|i| tail_constant(spec, sol, i)).collect::<Result<_, _>>()?,
        _ => vec![None; p],
    };
    let marginal_tails = if pred.marginals.is_empty() {
        Vec::new()
    } else {
        (0..p)
            .map(|i| (0..p).map(|j| pred.marginals[i * p + j].descriptor).collect())
            .collect()
    };
    let report = MalthusianReport {
        alpha: sol.alpha,
        u: &sol.u,
        v: &sol.v,
        composition: &pred.composition,
        rho_residual: sol.rho_residual,
        bisection_iterations: sol.bisection_iterations,
        power_iterations: sol.power_iterations,
        tails: &pred.tails,
        tail_constants,
        marginal_tails,
        lattice_cap: cfg.analysis.lattice_cap,
    };

    let dir = &cfg.outputs.directory;
    write_file(dir, "kernel.csv", &kernel_csv(spec, cfg, sol.alpha)?)?;
    write_file(dir, "malthusian.json", &to_json(&report))?;
    write_file(dir, "degree_law.csv", &degree_law_csv(spec, cfg, &out)?)?;
    Ok(out)
}

#[derive(Debug, Serialize)]
struct ReplicaSummary {
    replica: usize,
    seed: u64,
    vertices: usize,
    events: u64,
    rate_updates: u64,
    final_time: f64,
    composition: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct SimulationSummary {
    base_seed: u64,
    root_type: usize,
    max_vertices: usize,
    replicas: Vec<ReplicaSummary>,
    mean_composition: Vec<f64>,
}

fn pooled_total_hist(records: &[TreeRecord]) -> Result<DegreeHistogram, CliError> {
    let hists = records
        .iter()
        .map(|r| empirical_degree_hist(r, DegreeMode::Total))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(DegreeHistogram::pool(&hists)?)
}

fn run_replicas(spec: &RateSpec, cfg: &RunConfig) -> Result<Vec<TreeRecord>, CliError> {
    let s = &cfg.simulation;
    Ok(simulate_replicas(
        spec,
        cfg.root_type - 1,
        s.max_vertices,
        s.seed,
        s.replicas,
        &sim_options(cfg),
    )?)
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<Vec<TreeRecord>, CliError> {
    let records = run_replicas(&cfg.spec, cfg)?;
    let dir = &cfg.outputs.directory;
    let p = cfg.spec.p();

    if cfg.simulation.write_trees {
        // One file per replica, written after all replicas finish.
        for (r, rec) in records.iter().enumerate() {
            write_file(dir, &format!("tree_r{r}.csv"), &rec.to_csv())?;
        }
    }

    let mut mean = vec![0.0; p];
    let replicas: Vec<ReplicaSummary> = records
        .iter()
        .enumerate()
        .map(|(r, rec)| {
            let composition = empirical_composition(rec);
            for (m, c) in mean.iter_mut().zip(&composition) {
                *m += c / records.len() as f64;
            }
            ReplicaSummary {
                replica: r,
                seed: rec.seed,
                vertices: rec.len(),
                events: rec.events,
                rate_updates: rec.rate_updates,
                final_time: rec.final_time,
                composition,
            }
        })
        .collect();
    let summary = SimulationSummary {
        base_seed: cfg.simulation.seed,
        root_type: cfg.root_type,
        max_vertices: cfg.simulation.max_vertices,
        replicas,
        mean_composition: mean,
    };
    write_file(dir, "summary.json", &to_json(&summary))?;

    let hist = pooled_total_hist(&records)?;
    let mut s = String::from("type,k,count,fraction\n");
    for ((i, key), e) in &hist.entries {
        let _ = writeln!(s, "{},{},{},{}", i + 1, key[0], e.count, e.fraction);
    }
    write_file(dir, "hist.csv", &s)?;
    Ok(records)
}

fn degree_plot(records: &[TreeRecord], pred: &Prediction, title: &str) -> Result<String, CliError> {
    let hist = pooled_total_hist(records)?;
    let mut plot = Plot {
        title: title.into(),
        x_label: "k + 1".into(),
        y_label: "fraction of vertices".into(),
        log_x: true,
        log_y: true,
        series: Vec::new(),
    };
    for i in 0..pred.p() {
        plot.series.push(Series {
            label: format!("type {} simulated", i + 1),
            points: hist.series(i).iter().map(|&(k, f, _)| (k as f64 + 1.0, f)).collect(),
            style: Style::Markers,
            color: i,
        });
        if let Some(law) = &pred.degree_law {
            plot.series.push(Series {
                label: format!("type {} limit", i + 1),
                points: (0..=law.k_max()).map(|k| (k as f64 + 1.0, law.limit_fraction(i, k))).collect(),
                style: Style::Line,
                color: i,
            });
        }
    }
    Ok(plot.render())
}

/// One point of a parameter sweep.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub value: f64,
    pub prediction: Prediction,
    pub report: ComparisonReport,
}

fn compare_spec(spec: &RateSpec, cfg: &RunConfig) -> Result<(Prediction, Vec<TreeRecord>, ComparisonReport), CliError> {
    let analysis = analyze_spec(spec, cfg)?;
    let records = run_replicas(spec, cfg)?;
    let report = compare(
        &records,
        spec,
        &analysis.prediction,
        cfg.simulation.seed,
        &CompareOptions::default(),
    )?;
    Ok((analysis.prediction, records, report))
}

/// Without a sweep, writes `report.csv` (and `degree.svg`). With a sweep,
/// writes `report_<index>.csv` per grid value plus `sweep.csv` (and
/// `sweep_composition.svg`, `sweep_exponent.svg`).
pub fn cmd_compare(cfg: &RunConfig) -> Result<Vec<SweepPoint>, CliError> {
    let dir = &cfg.outputs.directory;
    let Some(sweep) = &cfg.sweep else {
        let (prediction, records, report) = compare_spec(&cfg.spec, cfg)?;
        write_file(dir, "report.csv", &report.to_csv())?;
        if cfg.outputs.emit_svg {
            write_file(dir, "degree.svg", &degree_plot(&records, &prediction, "degree distribution")?)?;
        }
        return Ok(vec![SweepPoint {
            value: f64::NAN,
            prediction,
            report,
        }]);
    };

    let p = cfg.spec.p();
    let mut points = Vec::with_capacity(sweep.values.len());
    let mut csv =
        String::from("value,type,predicted_composition,simulated_composition,predicted_exponent,fitted_exponent\n");
    for (idx, &value) in sweep.values.iter().enumerate() {
        let spec = cfg
            .spec
            .with_coefficient(sweep.coefficient, sweep.i - 1, sweep.j - 1, value)
            .map_err(|e| CliError::Config(e.to_string()))?;
        let (prediction, _, report) = compare_spec(&spec, cfg)?;
        write_file(dir, &format!("report_{idx}.csv"), &report.to_csv())?;
        for i in 0..p {
            let tail = report.tail("degree", i);
            let _ = writeln!(
                csv,
                "{value},{},{},{},{},{}",
                i + 1,
                prediction.composition[i],
                report.composition[i].empirical,
                tail.and_then(|t| t.theoretical).map(|x| x.to_string()).unwrap_or_default(),
                tail.and_then(|t| t.fitted()).map(|x| x.to_string()).unwrap_or_default(),
            );
        }
        points.push(SweepPoint {
            value,
            prediction,
            report,
        });
    }
    write_file(dir, "sweep.csv", &csv)?;

    if cfg.outputs.emit_svg {
        let name = format!("{:?} {}{}", sweep.coefficient, sweep.i, sweep.j).to_lowercase();
        let mut comp = Plot {
            title: "composition".into(),
            x_label: name.clone(),
            y_label: "fraction of vertices".into(),
            log_x: true,
            ..Default::default()
        };
        let mut expo = Plot {
            title: "degree tail exponent".into(),
            x_label: name,
            y_label: "exponent".into(),
            log_x: true,
            ..Default::default()
        };
        for i in 0..p {
            let pick = |f: &dyn Fn(&SweepPoint) -> Option<f64>| -> Vec<(f64, f64)> {
                points.iter().filter_map(|pt| f(pt).map(|y| (pt.value, y))).collect()
            };
            comp.series.push(Series {
                label: format!("type {} predicted", i + 1),
                points: pick(&|pt| Some(pt.prediction.composition[i])),
                style: Style::Line,
                color: i,
            });
            comp.series.push(Series {
                label: format!("type {} simulated", i + 1),
                points: pick(&|pt| Some(pt.report.composition[i].empirical)),
                style: Style::Markers,
                color: i,
            });
            expo.series.push(Series {
                label: format!("type {} predicted", i + 1),
                points: pick(&|pt| pt.report.tail("degree", i).and_then(|t| t.theoretical)),
                style: Style::Line,
                color: i,
            });
            expo.series.push(Series {
                label: format!("type {} fitted", i + 1),
                points: pick(&|pt| pt.report.tail("degree", i).and_then(|t| t.fitted())),
                style: Style::Markers,
                color: i,
            });
        }
        write_file(dir, "sweep_composition.svg", &comp.render())?;
        write_file(dir, "sweep_exponent.svg", &expo.render())?;
    }
    Ok(points)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyRow {
    /// `recursion` for single cells, `kernel` for truncated kernel entries.
    pub check: &'static str,
    /// 1-based parent type.
    pub type_index: usize,
    /// Child vector `n_1;..;n_p`, or the 1-based child type for kernel rows.
    pub key: String,
    pub oracle: f64,
    pub analytic: f64,
    pub gap: f64,
    pub tol: f64,
}

impl VerifyRow {
    pub fn pass(&self) -> bool {
        self.gap <= self.tol
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub alpha: f64,
    /// Parameter used on the recursion side.
    pub alpha_recursion: f64,
    pub rows: Vec<VerifyRow>,
    /// Largest probability mass leaked off the lattice at the horizon.
    pub max_leak: f64,
}

impl VerifyReport {
    pub fn breaches(&self) -> usize {
        self.rows.iter().filter(|r| !r.pass()).count()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("check,type,key,oracle,analytic,gap,tol,pass\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                r.check,
                r.type_index,
                r.key,
                r.oracle,
                r.analytic,
                r.gap,
                r.tol,
                r.pass()
            );
        }
        s
    }
}

/// Cross-check the recursion and the lattice kernel against Laplace
/// transforms of the forward equations on `{|n| <= cap}`. Writes
/// `verify.csv`; any breach is reported as an error after the file is
/// written.
pub fn cmd_verify(cfg: &RunConfig) -> Result<VerifyReport, CliError> {
    let spec = &cfg.spec;
    let p = spec.p();
    let v = &cfg.verify;
    let sol = malthusian(spec, &cfg.malthusian_options())?;
    let alpha = sol.alpha;
    let alpha_rec = v.alpha_override.unwrap_or(alpha);
    let lattice_kernel = laplace_kernel_lattice(spec, alpha_rec, v.cap)?;
    let quad_tol = v.tol * 1e-2;

    let mut rows = Vec::new();
    let mut max_leak: f64 = 0.0;
    let mut w = vec![0.0; p];
    for i in 0..p {
        let fs = integrate_forward(spec, i, v.cap, default_t_max(alpha), &ForwardOptions::default())?;
        max_leak = max_leak.max(*fs.leaked.last().unwrap_or(&0.0));
        let table = LatticeTable::compute(spec, i, alpha_rec, LatticeBounds::Total(v.cap))?;
        let mut kernel = vec![0.0; p];
        for n in fs.cells() {
            let q = laplace_quadrature(&fs, alpha, n, quad_tol)?.value;
            let r = table.get(n).unwrap_or(0.0);
            spec.rate_row(i, n, &mut w).map_err(AnalyticError::from)?;
            for j in 0..p {
                kernel[j] += w[j] * q;
            }
            let key: Vec<String> = n.iter().map(u32::to_string).collect();
            rows.push(VerifyRow {
                check: "recursion",
                type_index: i + 1,
                key: key.join(";"),
                oracle: q,
                analytic: r,
                gap: (q - r).abs(),
                tol: v.tol,
            });
        }
        for (j, &o) in kernel.iter().enumerate() {
            let a = lattice_kernel.get(i, j).unwrap_or(f64::INFINITY);
            rows.push(VerifyRow {
                check: "kernel",
                type_index: i + 1,
                key: (j + 1).to_string(),
                oracle: o,
                analytic: a,
                gap: (o - a).abs(),
                tol: v.kernel_tol,
            });
        }
    }
    let report = VerifyReport {
        alpha,
        alpha_recursion: alpha_rec,
        rows,
        max_leak,
    };
    write_file(&cfg.outputs.directory, "verify.csv", &report.to_csv())?;
    match report.breaches() {
        0 => Ok(report),
        n => Err(CliError::Breach(format!("{n} of {} checks exceed tolerance", report.rows.len()))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simplex_cap_respects_limit() {
        assert_eq!(simplex_cap(1, 200, 1_000_000), 200);
        assert_eq!(simplex_cap(2, 200, 1_000_000), 200);
        let k = simplex_cap(4, 200, 1_000_000);
        // C(k + 4, 4) <= 1e6 < C(k + 5, 4)
        assert!(k > 0 && k < 200);
    }

    #[test]
    fn inf_formatting() {
        assert_eq!(fmt_opt(None), "inf");
        assert_eq!(fmt_opt(Some(0.5)), "0.5");
    }
}
