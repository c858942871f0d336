//! Implicit Euler for the regularized Cauchy-Dirichlet problem
//! `d_t u - div D_xi f(x,t,Du) = 0`, `u = g` on the parabolic boundary.
//!
//! Each time step solves `(u - u_prev)/dt = div_h flux(D_h u)` at interior
//! nodes with a damped lagged-coefficient iteration: the diffusivity is
//! frozen at the previous iterate, the resulting symmetric linear system is
//! solved exactly (tridiagonal in 1D, preconditioned CG in 2D), and the new
//! iterate is a convex combination of old and new.

mod boundary;
mod diagnostics;
mod linear;
mod mesh;

pub use boundary::{sine_mode, BoundaryDatum, Profile};
pub use diagnostics::{
    comparison_presets, energy_report, variational_gap, variational_gap_profile,
    variational_gap_scale, weak_residual, EnergyData, DUAL_MODES,
};
pub use linear::{pcg, thomas, CgOutcome};
pub use mesh::{Element, Mesh};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{Domain, GridError, SpaceTimeField};
use crate::model::{Integrand, IntegrandSpec};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error(
        "nonlinear iteration did not converge at time level {time_level}: residual {residual:e}"
    )]
    StepFailed { time_level: usize, residual: f64 },
    #[error("iteration diverged at time level {time_level}")]
    Diverged { time_level: usize },
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error("invalid test function: {0}")]
    TestFunction(String),
    #[error("comparison map does not match the boundary datum: deviation {deviation:e}")]
    BoundaryMismatch { deviation: f64 },
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    pub max_iterations: usize,
    pub damping: f64,
    /// Max-norm of the step residual, in units of `u`.
    pub tolerance: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            max_iterations: 400,
            damping: 0.5,
            tolerance: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    pub domain: Domain,
    /// Integrand including its regularization `eps`.
    pub spec: IntegrandSpec,
    pub boundary: BoundaryDatum,
    pub settings: SolverSettings,
}

impl SolveConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        let s = &self.settings;
        if !(s.tolerance > 0.0 && s.tolerance.is_finite()) {
            return Err(SolverError::Config(format!(
                "tolerance must be positive, got {}",
                s.tolerance
            )));
        }
        if !(s.damping > 0.0 && s.damping <= 1.0) {
            return Err(SolverError::Config(format!(
                "damping must lie in (0, 1], got {}",
                s.damping
            )));
        }
        if s.max_iterations == 0 {
            return Err(SolverError::Config(
                "max_iterations must be positive".into(),
            ));
        }
        if self.spec.params.n != self.domain.n {
            return Err(SolverError::Config(format!(
                "integrand dimension {} differs from domain dimension {}",
                self.spec.params.n, self.domain.n
            )));
        }
        self.boundary
            .validate(self.domain.n)
            .map_err(SolverError::Config)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub field: SpaceTimeField,
    /// Statistics of the step into each level `1..=nt`.
    pub steps: Vec<StepStats>,
}

/// Precomputed discretization for one configuration.
#[derive(Debug, Clone)]
pub struct Stepper {
    cfg: SolveConfig,
    mesh: Mesh,
    integrand: Integrand,
}

impl Stepper {
    pub fn new(cfg: &SolveConfig) -> Result<Self, SolverError> {
        cfg.validate()?;
        Ok(Self {
            mesh: Mesh::new(&cfg.domain, &cfg.spec.coefficients),
            integrand: cfg.spec.integrand(),
            cfg: cfg.clone(),
        })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn integrand(&self) -> &Integrand {
        &self.integrand
    }

    /// Max over interior nodes of `|(u - u_prev) - dt div_h flux(D_h u)|`.
    pub fn residual(&self, u: &[f64], u_prev: &[f64]) -> f64 {
        let dt = self.cfg.domain.dt();
        let weak = self
            .mesh
            .weak_divergence(&self.mesh.fluxes(u, &self.integrand));
        let mut worst: f64 = 0.0;
        for s in 0..u.len() {
            if !self.mesh.boundary[s] {
                let r = (u[s] - u_prev[s]) + dt * weak[s] / self.mesh.mass[s];
                if r.is_nan() {
                    return f64::NAN;
                }
                worst = worst.max(r.abs());
            }
        }
        worst
    }

    fn diffusivities(&self, u: &[f64]) -> Vec<f64> {
        self.mesh
            .elements
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let g = e.gradient(u);
                self.integrand.diffusivity(
                    g[0] * g[0] + g[1] * g[1],
                    self.mesh.a[i],
                    self.mesh.b[i],
                )
            })
            .collect()
    }

    /// `M x + dt K(kappa) x`.
    fn apply(&self, kappa: &[f64], x: &[f64], out: &mut [f64]) {
        let dt = self.cfg.domain.dt();
        for (o, (m, v)) in out.iter_mut().zip(self.mesh.mass.iter().zip(x)) {
            *o = m * v;
        }
        for (e, k) in self.mesh.elements.iter().zip(kappa) {
            let g = e.gradient(x);
            let w = dt * e.area * k;
            for v in 0..e.vertices {
                out[e.nodes[v]] += w * (e.coef[v][0] * g[0] + e.coef[v][1] * g[1]);
            }
        }
    }

    /// Solves `(M + dt K(kappa)) u_new = M u_prev` with the boundary values of
    /// `u`, returning `u_new`.
    fn linear_solve(&self, kappa: &[f64], u: &[f64], u_prev: &[f64]) -> Vec<f64> {
        let n = u.len();
        let dt = self.cfg.domain.dt();
        let boundary = &self.mesh.boundary;
        let mut au = vec![0.0; n];
        self.apply(kappa, u, &mut au);
        let rhs: Vec<f64> = (0..n)
            .map(|s| {
                if boundary[s] {
                    0.0
                } else {
                    self.mesh.mass[s] * u_prev[s] - au[s]
                }
            })
            .collect();
        let mut diag: Vec<f64> = (0..n)
            .map(|s| if boundary[s] { 0.0 } else { self.mesh.mass[s] })
            .collect();
        let mut delta = vec![0.0; n];
        if self.cfg.domain.n == 1 {
            let h = self.cfg.domain.spacing(0);
            let m = n - 2;
            let mut lower = vec![0.0; m];
            let mut upper = vec![0.0; m];
            let mut d = vec![0.0; m];
            let mut r = rhs[1..n - 1].to_vec();
            for i in 0..m {
                let s = i + 1;
                let (kl, kr) = (dt * kappa[s - 1] / h, dt * kappa[s] / h);
                d[i] = self.mesh.mass[s] + kl + kr;
                lower[i] = -kl;
                upper[i] = -kr;
            }
            thomas(&lower, &d, &upper, &mut r);
            delta[1..n - 1].copy_from_slice(&r);
        } else {
            for (e, k) in self.mesh.elements.iter().zip(kappa) {
                for v in 0..e.vertices {
                    let s = e.nodes[v];
                    if !boundary[s] {
                        diag[s] += dt * e.area * k * (e.coef[v][0].powi(2) + e.coef[v][1].powi(2));
                    }
                }
            }
            let tol = 1e-3 * self.cfg.settings.tolerance;
            let max_iter = 20 * n + 100;
            pcg(
                |x, out| self.apply(kappa, x, out),
                &diag,
                &rhs,
                &self.mesh.mass,
                &mut delta,
                tol,
                max_iter,
            );
        }
        u.iter().zip(&delta).map(|(a, b)| a + b).collect()
    }

    /// One implicit Euler step from `u_prev` into time level `level`.
    pub fn step(&self, u_prev: &[f64], level: usize) -> Result<(Vec<f64>, StepStats), SolverError> {
        let d = &self.cfg.domain;
        let s = &self.cfg.settings;
        let g_next = self.cfg.boundary.slice(d, d.time(level));
        let mut u = u_prev.to_vec();
        for (i, g) in g_next.iter().enumerate() {
            if self.mesh.boundary[i] {
                u[i] = *g;
            }
        }
        let mut residual = self.residual(&u, u_prev);
        for it in 0..=s.max_iterations {
            if !residual.is_finite() || u.iter().any(|v| !v.is_finite()) {
                return Err(SolverError::Diverged { time_level: level });
            }
            if residual < s.tolerance {
                return Ok((
                    u,
                    StepStats {
                        iterations: it,
                        residual,
                    },
                ));
            }
            if it == s.max_iterations {
                break;
            }
            let kappa = self.diffusivities(&u);
            let target = self.linear_solve(&kappa, &u, u_prev);
            for (ui, ti) in u.iter_mut().zip(&target) {
                *ui += s.damping * (ti - *ui);
            }
            residual = self.residual(&u, u_prev);
        }
        Err(SolverError::StepFailed {
            time_level: level,
            residual,
        })
    }
}

/// One implicit Euler step from `u_prev` into time level `level`.
pub fn step(u_prev: &[f64], level: usize, cfg: &SolveConfig) -> Result<Vec<f64>, SolverError> {
    Ok(Stepper::new(cfg)?.step(u_prev, level)?.0)
}

/// Marches from `u(., 0) = g(., 0)` to the final time.
pub fn solve(cfg: &SolveConfig) -> Result<Solution, SolverError> {
    let stepper = Stepper::new(cfg)?;
    let d = &cfg.domain;
    let mut values = Vec::with_capacity(d.len());
    let mut u = cfg.boundary.slice(d, 0.0);
    values.extend_from_slice(&u);
    let mut steps = Vec::with_capacity(d.nt);
    for level in 1..=d.nt {
        let (next, stats) = stepper.step(&u, level)?;
        values.extend_from_slice(&next);
        steps.push(stats);
        u = next;
    }
    Ok(Solution {
        field: SpaceTimeField::new(d.clone(), values)?,
        steps,
    })
}
