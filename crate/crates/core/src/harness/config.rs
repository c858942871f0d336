use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::exponents::{derive, DerivedExponents, StructureParams};
use crate::grid::{Cylinder, Domain};
use crate::model::{CoefficientKind, CoefficientSpec, IntegrandSpec};
use crate::solver::{BoundaryDatum, SolveConfig, SolverSettings};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSection {
    pub n: usize,
    pub p: f64,
    pub q: f64,
    pub alpha: f64,
    pub beta: f64,
    #[serde(default)]
    pub mu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSection {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub t_final: f64,
    pub nx: usize,
    pub nt: usize,
}

/// `eps_i = eps0 * 2^{-i}` for `i = 0..=levels`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub eps0: f64,
    #[serde(default)]
    pub levels: usize,
}

/// Intrinsic target cylinders `Q_{rho, rho^P}(center, t)`, given as
/// parallel lists.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetsSection {
    #[serde(default)]
    pub center: Vec<Vec<f64>>,
    #[serde(default)]
    pub t: Vec<f64>,
    #[serde(default)]
    pub rho: Vec<f64>,
    /// Truncation levels for the Caccioppoli check, as fractions of the
    /// half-cylinder sup.
    #[serde(default = "default_levels")]
    pub caccioppoli_levels: Vec<f64>,
    #[serde(default = "default_depth")]
    pub trace_depth: usize,
}

fn default_levels() -> Vec<f64> {
    vec![0.0, 0.5]
}

fn default_depth() -> usize {
    8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSection {
    #[serde(default = "unit")]
    pub c_cal: f64,
}

fn unit() -> f64 {
    1.0
}

impl Default for CalibrationSection {
    fn default() -> Self {
        Self { c_cal: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_dir")]
    pub dir: String,
}

fn default_dir() -> String {
    "out".into()
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: default_dir() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub workers: usize,
}

fn one() -> usize {
    1
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            seed: 0,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub params: ParamsSection,
    pub domain: DomainSection,
    pub coefficient_a: CoefficientKind,
    pub coefficient_b: CoefficientKind,
    pub boundary: BoundaryDatum,
    #[serde(default)]
    pub solver: SolverSettings,
    pub sweep: SweepSection,
    #[serde(default)]
    pub targets: TargetsSection,
    #[serde(default)]
    pub calibration: CalibrationSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub run: RunSection,
}

/// A resolved target: the intrinsic cylinder `Q_{rho,sigma}` whose double
/// must sit inside `Omega_T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub center: Vec<f64>,
    pub t: f64,
    pub rho: f64,
    pub sigma: f64,
}

impl Target {
    pub fn half(&self) -> Cylinder {
        Cylinder::new(self.center.clone(), self.t, self.rho, self.sigma)
    }

    pub fn full(&self) -> Cylinder {
        Cylinder::new(
            self.center.clone(),
            self.t,
            2.0 * self.rho,
            2.0 * self.sigma,
        )
    }
}

/// One-based line of `key = ...` inside `[section]`, or of the section
/// header when the key is absent.
fn locate(source: &str, section: &str, key: Option<&str>) -> Option<usize> {
    let header = format!("[{section}]");
    let mut in_section = false;
    let mut header_line = None;
    for (i, line) in source.lines().enumerate() {
        let t = line.trim();
        if t.starts_with('[') {
            in_section = t == header;
            if in_section {
                header_line = Some(i + 1);
            }
            continue;
        }
        if in_section {
            if let Some(k) = key {
                let name = t.split('=').next().unwrap_or("").trim();
                if name == k {
                    return Some(i + 1);
                }
            }
        }
    }
    header_line
}

impl ExperimentConfig {
    /// Parses and validates a configuration; every error carries the line
    /// it refers to.
    pub fn from_toml_str(source: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(source).map_err(|e| {
            let line = e
                .span()
                .map(|s| source[..s.start].matches('\n').count() + 1);
            HarnessError::Config {
                line,
                message: e.message().to_string(),
            }
        })?;
        cfg.validate()
            .map_err(|(section, key, message)| HarnessError::Config {
                line: locate(source, section, key),
                message: format!(
                    "[{section}]{}: {message}",
                    key.map(|k| format!(" {k}")).unwrap_or_default()
                ),
            })?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String, HarnessError> {
        toml::to_string(self).map_err(|e| HarnessError::Config {
            line: None,
            message: e.to_string(),
        })
    }

    pub fn structure_params(&self) -> StructureParams {
        let p = &self.params;
        StructureParams::new(p.n, p.p, p.q, p.alpha, p.beta)
            .with_mu(p.mu)
            .with_eps(self.sweep.eps0)
    }

    pub fn exponents(&self) -> Result<DerivedExponents, HarnessError> {
        derive(&self.structure_params()).map_err(|e| HarnessError::Config {
            line: None,
            message: e.to_string(),
        })
    }

    pub fn grid(&self) -> Result<Domain, HarnessError> {
        let d = &self.domain;
        Domain::new(d.lower.clone(), d.upper.clone(), d.t_final, d.nx, d.nt)
            .map_err(HarnessError::from)
    }

    pub fn coefficients(&self) -> CoefficientSpec {
        CoefficientSpec {
            a: self.coefficient_a.clone(),
            b: self.coefficient_b.clone(),
        }
    }

    pub fn schedule(&self) -> Vec<f64> {
        (0..=self.sweep.levels)
            .map(|i| self.sweep.eps0 * 0.5f64.powi(i as i32))
            .collect()
    }

    pub fn solve_config(&self, eps: f64) -> Result<SolveConfig, HarnessError> {
        let params = self.structure_params().with_eps(eps);
        Ok(SolveConfig {
            domain: self.grid()?,
            spec: IntegrandSpec::new(params, self.coefficients())?,
            boundary: self.boundary.clone(),
            settings: self.solver,
        })
    }

    pub fn target_list(&self) -> Result<Vec<Target>, HarnessError> {
        let d = self.exponents()?;
        let ts = &self.targets;
        Ok((0..ts.rho.len())
            .map(|i| Target {
                center: ts.center[i].clone(),
                t: ts.t[i],
                rho: ts.rho[i],
                sigma: ts.rho[i].powf(d.intrinsic),
            })
            .collect())
    }

    fn validate(&self) -> Result<(), (&'static str, Option<&'static str>, String)> {
        if !(self.sweep.eps0 > 0.0 && self.sweep.eps0 <= 1.0) {
            return Err((
                "sweep",
                Some("eps0"),
                format!("must lie in (0, 1], got {}", self.sweep.eps0),
            ));
        }
        let params = self.structure_params();
        params
            .validate_raw()
            .map_err(|e| ("params", None, e.to_string()))?;
        let d = derive(&params).map_err(|e| ("params", Some("q"), e.to_string()))?;
        if params.n != self.domain.lower.len() {
            return Err((
                "domain",
                Some("lower"),
                format!("expected {} coordinates", params.n),
            ));
        }
        let grid = self.grid().map_err(|e| ("domain", None, e.to_string()))?;
        self.coefficient_a
            .validate(params.n)
            .map_err(|e| ("coefficient_a", None, e.to_string()))?;
        self.coefficient_b
            .validate(params.n)
            .map_err(|e| ("coefficient_b", None, e.to_string()))?;
        self.boundary
            .validate(params.n)
            .map_err(|e| ("boundary", None, e))?;
        let s = &self.solver;
        if !(s.damping > 0.0 && s.damping <= 1.0) {
            return Err((
                "solver",
                Some("damping"),
                format!("must lie in (0, 1], got {}", s.damping),
            ));
        }
        if !(s.tolerance > 0.0 && s.tolerance.is_finite()) {
            return Err((
                "solver",
                Some("tolerance"),
                format!("must be positive, got {}", s.tolerance),
            ));
        }
        if s.max_iterations == 0 {
            return Err(("solver", Some("max_iterations"), "must be positive".into()));
        }
        if self.sweep.levels > 40 {
            return Err((
                "sweep",
                Some("levels"),
                format!("at most 40 levels, got {}", self.sweep.levels),
            ));
        }
        let ts = &self.targets;
        if ts.center.len() != ts.rho.len() || ts.t.len() != ts.rho.len() {
            return Err((
                "targets",
                Some("rho"),
                format!(
                    "center, t and rho need equal lengths, got {}, {}, {}",
                    ts.center.len(),
                    ts.t.len(),
                    ts.rho.len()
                ),
            ));
        }
        if ts
            .caccioppoli_levels
            .iter()
            .any(|l| !(l.is_finite() && *l >= 0.0))
        {
            return Err((
                "targets",
                Some("caccioppoli_levels"),
                "levels must be finite and >= 0".into(),
            ));
        }
        for i in 0..ts.rho.len() {
            if ts.center[i].len() != params.n {
                return Err((
                    "targets",
                    Some("center"),
                    format!("target {i} needs {} coordinates", params.n),
                ));
            }
            if !(ts.rho[i] > 0.0 && ts.rho[i].is_finite()) {
                return Err((
                    "targets",
                    Some("rho"),
                    format!("target {i} needs a positive radius"),
                ));
            }
            let sigma = ts.rho[i].powf(d.intrinsic);
            let full = Cylinder::new(ts.center[i].clone(), ts.t[i], 2.0 * ts.rho[i], 2.0 * sigma);
            if ts.t[i] > grid.t_final
                || !full.is_interior(&grid)
                || full.parabolic_distance(&grid, &d) <= 0.0
            {
                return Err((
                    "targets",
                    Some("rho"),
                    format!("Q_(2rho,2sigma) of target {i} is not inside the domain at positive parabolic distance"),
                ));
            }
        }
        if !(self.calibration.c_cal > 0.0 && self.calibration.c_cal.is_finite()) {
            return Err(("calibration", Some("c_cal"), "must be positive".into()));
        }
        if self.run.workers == 0 {
            return Err(("run", Some("workers"), "must be positive".into()));
        }
        Ok(())
    }
}

pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig, HarnessError> {
    let source = std::fs::read_to_string(path.as_ref())?;
    ExperimentConfig::from_toml_str(&source)
}
