use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ExperimentConfig, HarnessError, Target};
use crate::degiorgi::{caccioppoli_sides, verify_sup_bound, BoundReport, CaccioppoliSides};
use crate::exponents::DerivedExponents;
use crate::grid::{Domain, Region, SpaceTimeField};
use crate::solver::{
    comparison_presets, energy_report, solve, variational_gap_profile, variational_gap_scale,
    EnergyData, SolveConfig,
};

/// Relative slack allowed for the variational gap.
pub const GAP_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveManifest {
    pub index: usize,
    pub eps: f64,
    pub steps: usize,
    pub total_iterations: usize,
    pub max_iterations: usize,
    pub max_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaccioppoliRecord {
    /// Level as a fraction of the half-cylinder sup.
    pub fraction: f64,
    pub k: f64,
    pub sides: CaccioppoliSides,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetReport {
    pub target: Target,
    pub bound: BoundReport,
    pub caccioppoli: Vec<CaccioppoliRecord>,
    /// Largest `c_min` over the Caccioppoli levels.
    pub c_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepItem {
    pub index: usize,
    pub eps: f64,
    pub manifest: SolveManifest,
    pub energy: EnergyData,
    pub targets: Vec<TargetReport>,
    /// `max |u|` over the compact set `K`.
    pub sup_k: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRecord {
    pub name: String,
    pub min_gap: f64,
    pub min_level: usize,
    pub scale: f64,
    pub pass: bool,
    pub profile: Vec<f64>,
}

/// `sup_K |u|` against the data bracket `1 + M_g`; the exponent is the one
/// that makes the bound hold with unit constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalBoundSummary {
    pub index: usize,
    pub sup_k: f64,
    pub bracket: f64,
    pub exponent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub index: usize,
    pub eps: f64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub config: ExperimentConfig,
    pub exponents: DerivedExponents,
    pub schedule: Vec<f64>,
    pub items: Vec<SweepItem>,
    /// `max_K |u_{i+1} - u_i|`.
    pub cauchy: Vec<f64>,
    /// Least `i` from which every later `eps_j` is below the threshold of
    /// every target.
    pub compliance_index: Option<usize>,
    /// Gaps of the last iterate, including `v = u`.
    pub gaps: Vec<GapRecord>,
    pub local_bound: Vec<LocalBoundSummary>,
    pub failure: Option<FailureRecord>,
    pub pass: bool,
}

/// The report together with the computed fields, one per completed item.
#[derive(Debug, Clone)]
pub struct SweepRun {
    pub report: SweepReport,
    pub fields: Vec<SpaceTimeField>,
}

pub fn compliance_index(items: &[SweepItem]) -> Option<usize> {
    let ok = |it: &SweepItem| it.targets.iter().all(|t| t.bound.eps_ok);
    let mut first = None;
    for it in items.iter().rev() {
        if !ok(it) {
            break;
        }
        first = Some(it.index);
    }
    first
}

/// Flat indices of the nodes in `K`: the union of the target half
/// cylinders, or every interior node after `t = 0` without targets.
fn k_nodes(grid: &Domain, targets: &[Target]) -> Result<Vec<usize>, HarnessError> {
    let mut nodes = Vec::new();
    if targets.is_empty() {
        for j in 1..grid.n_time() {
            for s in (0..grid.n_space()).filter(|&s| !grid.is_boundary(s)) {
                nodes.push(grid.index(j, s));
            }
        }
        return Ok(nodes);
    }
    for t in targets {
        let sel = grid.select(&Region::Cylinder(t.half()))?;
        for &(j, _) in &sel.time {
            for &(s, _) in &sel.space {
                nodes.push(grid.index(j, s));
            }
        }
    }
    nodes.sort_unstable();
    nodes.dedup();
    Ok(nodes)
}

struct Shared<'a> {
    cfg: &'a ExperimentConfig,
    d: DerivedExponents,
    targets: Vec<Target>,
    a: SpaceTimeField,
    b: SpaceTimeField,
    k_nodes: Vec<usize>,
}

fn evaluate(
    index: usize,
    eps: f64,
    sh: &Shared,
) -> Result<(SweepItem, SpaceTimeField), HarnessError> {
    let solve_cfg = sh.cfg.solve_config(eps)?;
    let sol = solve(&solve_cfg).map_err(|source| HarnessError::Solve { index, source })?;
    let manifest = SolveManifest {
        index,
        eps,
        steps: sol.steps.len(),
        total_iterations: sol.steps.iter().map(|s| s.iterations).sum(),
        max_iterations: sol.steps.iter().map(|s| s.iterations).max().unwrap_or(0),
        max_residual: sol.steps.iter().map(|s| s.residual).fold(0.0, f64::max),
    };
    let u = sol.field;
    let energy = energy_report(&u, &solve_cfg);
    let params = solve_cfg.spec.params;
    let mut targets = Vec::with_capacity(sh.targets.len());
    for t in &sh.targets {
        let bound = verify_sup_bound(
            &u,
            &t.center,
            t.t,
            t.rho,
            t.sigma,
            &sh.a,
            &sh.b,
            &params,
            &sh.d,
            sh.cfg.calibration.c_cal,
        )?;
        let mut caccioppoli = Vec::new();
        for &fraction in &sh.cfg.targets.caccioppoli_levels {
            let k = fraction * bound.ess_sup;
            let sides =
                caccioppoli_sides(&u, k, &t.half(), &t.full(), &sh.a, &sh.b, &params, &sh.d)?;
            caccioppoli.push(CaccioppoliRecord { fraction, k, sides });
        }
        let c_min = caccioppoli
            .iter()
            .map(|c| c.sides.c_min)
            .fold(0.0, f64::max);
        targets.push(TargetReport {
            target: t.clone(),
            bound,
            caccioppoli,
            c_min,
        });
    }
    let sup_k = sh
        .k_nodes
        .iter()
        .map(|&i| u.values()[i].abs())
        .fold(0.0, f64::max);
    Ok((
        SweepItem {
            index,
            eps,
            manifest,
            energy,
            targets,
            sup_k,
        },
        u,
    ))
}

/// Gap profiles of `u` against the preset comparison maps and `v = u`.
pub fn variational_gaps(
    u: &SpaceTimeField,
    solve_cfg: &SolveConfig,
) -> Result<Vec<GapRecord>, HarnessError> {
    let mut maps = comparison_presets(solve_cfg);
    maps.push(("solution".to_string(), u.clone()));
    let mut out = Vec::with_capacity(maps.len());
    for (name, v) in maps {
        let profile =
            variational_gap_profile(u, &v, solve_cfg).map_err(HarnessError::Diagnostics)?;
        let scale = variational_gap_scale(u, &v, solve_cfg).map_err(HarnessError::Diagnostics)?;
        let (min_level, min_gap) =
            profile
                .iter()
                .copied()
                .enumerate()
                .fold(
                    (0, f64::INFINITY),
                    |best, (j, g)| if g < best.1 { (j, g) } else { best },
                );
        out.push(GapRecord {
            name,
            min_gap,
            min_level,
            scale,
            pass: min_gap >= -GAP_TOLERANCE * scale,
            profile,
        });
    }
    Ok(out)
}

/// Solves every `eps_i` of the schedule, in parallel up to the configured
/// worker count, and assembles the report in index order. A failed solve
/// truncates the sweep at that index and is recorded in the report.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepRun, HarnessError> {
    let d = cfg.exponents()?;
    let grid = cfg.grid()?;
    let targets = cfg.target_list()?;
    let shared = Shared {
        cfg,
        d,
        a: cfg.coefficient_a.sample(&grid),
        b: cfg.coefficient_b.sample(&grid),
        k_nodes: k_nodes(&grid, &targets)?,
        targets,
    };
    let schedule = cfg.schedule();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.run.workers)
        .build()
        .map_err(|e| HarnessError::Config {
            line: None,
            message: format!("worker pool: {e}"),
        })?;
    let results: Vec<_> = pool.install(|| {
        schedule
            .par_iter()
            .enumerate()
            .map(|(i, &eps)| evaluate(i, eps, &shared))
            .collect()
    });

    let mut items = Vec::new();
    let mut fields = Vec::new();
    let mut failure = None;
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok((item, u)) => {
                items.push(item);
                fields.push(u);
            }
            Err(HarnessError::Solve { source, .. }) => {
                failure = Some(FailureRecord {
                    index: i,
                    eps: schedule[i],
                    message: source.to_string(),
                });
                break;
            }
            Err(e) => return Err(e),
        }
    }

    let cauchy = fields
        .windows(2)
        .map(|w| {
            shared
                .k_nodes
                .iter()
                .map(|&i| (w[1].values()[i] - w[0].values()[i]).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    let gaps = match (fields.last(), items.last()) {
        (Some(u), Some(item)) => variational_gaps(u, &cfg.solve_config(item.eps)?)?,
        _ => Vec::new(),
    };
    let local_bound = items
        .iter()
        .map(|it| {
            let bracket = 1.0 + it.energy.m_g;
            let exponent = (bracket > 1.0 && it.sup_k > 0.0).then(|| it.sup_k.ln() / bracket.ln());
            LocalBoundSummary {
                index: it.index,
                sup_k: it.sup_k,
                bracket,
                exponent,
            }
        })
        .collect();
    let pass = failure.is_none()
        && items
            .iter()
            .all(|it| it.targets.iter().all(|t| t.bound.pass))
        && gaps.iter().all(|g| g.pass);
    let report = SweepReport {
        config: cfg.clone(),
        exponents: shared.d,
        schedule,
        compliance_index: compliance_index(&items),
        items,
        cauchy,
        gaps,
        local_bound,
        failure,
        pass,
    };
    Ok(SweepRun { report, fields })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CoefficientKind;

    fn config(extra: &str) -> ExperimentConfig {
        let src = format!(
            r#"
[params]
n = 1
p = 2.0
q = 2.0
alpha = inf
beta = inf

[domain]
lower = [0.0]
upper = [1.0]
t_final = 0.1
nx = 33
nt = 40

[coefficient_a]
kind = "constant"
value = 0.5

[coefficient_b]
kind = "constant"
value = 0.5

{extra}
"#
        );
        ExperimentConfig::from_toml_str(&src).unwrap()
    }

    fn zero_config() -> ExperimentConfig {
        let mut cfg = config(
            "[boundary]\nprofile = \"zero\"\n[sweep]\neps0 = 0.5\nlevels = 1\n[targets]\ncenter = [[0.5]]\nt = [0.09]\nrho = [0.1]\n",
        );
        // unit coefficients keep the linear time-scale term finite
        cfg.coefficient_a = CoefficientKind::Constant { value: 1.0 };
        cfg.coefficient_b = CoefficientKind::Constant { value: 1.0 };
        cfg
    }

    #[test]
    fn zero_data_is_trivial() {
        let run = run_sweep(&zero_config()).unwrap();
        let r = &run.report;
        assert!(r.pass);
        assert_eq!(r.items.len(), 2);
        assert!(run.fields.iter().all(|f| f.max_abs() == 0.0));
        assert_eq!(r.cauchy, vec![0.0]);
        assert!(r
            .items
            .iter()
            .all(|it| it.targets.iter().all(|t| t.bound.pass && t.c_min == 0.0)));
        assert_eq!(r.compliance_index, Some(0));
    }

    #[test]
    fn heat_regime_matches_closed_form() {
        let cfg = config(
            "[boundary]\nprofile = \"sine\"\namplitude = 1.0\nmode = 1\n[sweep]\neps0 = 1e-12\n",
        );
        let run = run_sweep(&cfg).unwrap();
        let u = &run.fields[0];
        let dom = u.domain();
        let pi2 = std::f64::consts::PI.powi(2);
        let mut err: f64 = 0.0;
        for j in 0..dom.n_time() {
            for s in 0..dom.n_space() {
                let exact =
                    (-pi2 * dom.time(j)).exp() * (std::f64::consts::PI * dom.coords(s)[0]).sin();
                err = err.max((u.at(j, s) - exact).abs());
            }
        }
        assert!(err < 5e-3, "{err}");
        assert!(run.report.gaps.iter().all(|g| g.pass));
    }

    #[test]
    fn compliance_is_a_suffix() {
        let run = run_sweep(&zero_config()).unwrap();
        let base = run.report.items[0].clone();
        let items: Vec<SweepItem> = [true, false, true, true]
            .iter()
            .enumerate()
            .map(|(i, &ok)| {
                let mut it = base.clone();
                it.index = i;
                it.targets[0].bound.eps_ok = ok;
                it
            })
            .collect();
        assert_eq!(compliance_index(&items), Some(2));
        assert_eq!(compliance_index(&items[..2]), None);
        assert_eq!(compliance_index(&[]), None);
    }
}
