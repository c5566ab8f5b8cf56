//! Run configuration. See `docs/config.schema.json` for the published schema.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::analytic::{KernelOptions, MalthusianOptions, PerronOptions};
use crate::rates::{Coefficient, RateSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub spec: RateSpec,
    /// 1-based.
    #[serde(default = "one")]
    pub root_type: usize,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub outputs: OutputConfig,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub verify: VerifyConfig,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    /// Extra `theta` values at which the kernel is tabulated.
    pub theta_grid: Vec<f64>,
    pub tolerances: Tolerances,
    /// Degree cap for tables and the lattice kernel route.
    pub lattice_cap: u32,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            theta_grid: Vec::new(),
            tolerances: Tolerances::default(),
            lattice_cap: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub theta: f64,
    pub rho: f64,
    pub perron: f64,
    pub series: f64,
    pub lattice_mass: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            theta: 1e-12,
            rho: 1e-10,
            perron: 1e-13,
            series: 1e-12,
            lattice_mass: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationConfig {
    pub max_vertices: usize,
    pub replicas: usize,
    pub seed: u64,
    /// Events per unit time above which tabulated families abort.
    pub event_guard: f64,
    /// Write one tree CSV per replica.
    pub write_trees: bool,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            max_vertices: 100_000,
            replicas: 1,
            seed: 1,
            event_guard: 1e7,
            write_trees: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub directory: PathBuf,
    pub emit_svg: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("out"),
            emit_svg: false,
        }
    }
}

/// Vary one linear coefficient over a list of values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub coefficient: Coefficient,
    /// 1-based.
    pub i: usize,
    /// 1-based.
    pub j: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    /// Child vectors with `|n| <= cap` are checked.
    pub cap: u32,
    pub tol: f64,
    /// Tolerance for the truncated kernel sums.
    pub kernel_tol: f64,
    /// Replaces the computed parameter on the recursion side only; used as
    /// a negative control.
    pub alpha_override: Option<f64>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            cap: 6,
            tol: 1e-4,
            kernel_tol: 2e-3,
            alpha_override: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, String> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), String> {
        let p = self.spec.p();
        if self.root_type == 0 || self.root_type > p {
            return Err(format!("root_type must be in 1..={p}"));
        }
        let t = &self.analysis.tolerances;
        for (name, v) in [
            ("theta", t.theta),
            ("rho", t.rho),
            ("perron", t.perron),
            ("series", t.series),
            ("lattice_mass", t.lattice_mass),
            ("verify.tol", self.verify.tol),
            ("verify.kernel_tol", self.verify.kernel_tol),
            ("event_guard", self.simulation.event_guard),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("{name} must be positive"));
            }
        }
        if self.analysis.theta_grid.iter().any(|&x| !(x.is_finite() && x > 0.0)) {
            return Err("theta_grid entries must be positive".into());
        }
        if self.simulation.replicas == 0 {
            return Err("replicas must be at least 1".into());
        }
        if self.simulation.max_vertices == 0 {
            return Err("max_vertices must be at least 1".into());
        }
        if let Some(a) = self.verify.alpha_override {
            if !(a.is_finite() && a > 0.0) {
                return Err("alpha_override must be positive".into());
            }
        }
        if let Some(s) = &self.sweep {
            if s.i == 0 || s.i > p || s.j == 0 || s.j > p {
                return Err(format!("sweep indices must be in 1..={p}"));
            }
            if s.values.is_empty() {
                return Err("sweep needs at least one value".into());
            }
            for &v in &s.values {
                self.spec
                    .with_coefficient(s.coefficient, s.i - 1, s.j - 1, v)
                    .map_err(|e| format!("sweep value {v}: {e}"))?;
            }
        }
        Ok(())
    }

    pub fn malthusian_options(&self) -> MalthusianOptions {
        let t = &self.analysis.tolerances;
        MalthusianOptions {
            theta_tol: t.theta,
            rho_tol: t.rho,
            perron: PerronOptions {
                tol: t.perron,
                ..Default::default()
            },
            kernel: KernelOptions {
                series_tol: t.series,
                lattice_cap: self.analysis.lattice_cap,
                ..Default::default()
            },
            lattice_mass_tol: t.lattice_mass,
            ..Default::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = RunConfig::from_json(
            r#"{"spec":{"p":1,"family":"linear_total","gamma":[[1.0]],"beta":[[1.0]]}}"#,
        )
        .unwrap();
        assert_eq!(cfg.root_type, 1);
        assert_eq!(cfg.simulation.replicas, 1);
        assert_eq!(cfg.verify.cap, 6);
    }

    #[test]
    fn rejects_bad_configs() {
        let spec = r#""spec":{"p":1,"family":"linear_total","gamma":[[1.0]],"beta":[[1.0]]}"#;
        for extra in [
            r#","root_type":2"#,
            r#","simulation":{"replicas":0}"#,
            r#","analysis":{"tolerances":{"rho":-1}}"#,
            r#","unknown":1"#,
            r#","sweep":{"coefficient":"beta","i":1,"j":1,"values":[0.0]}"#,
        ] {
            assert!(RunConfig::from_json(&format!("{{{spec}{extra}}}")).is_err(), "{extra}");
        }
        assert!(RunConfig::from_json("{not json").is_err());
    }
}
