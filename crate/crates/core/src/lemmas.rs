//! Executable versions of the auxiliary tools behind the sup-bound: the
//! exponential time mollification, the parabolic interpolation inequality,
//! the fast geometric convergence lemma and the absorption lemma's bound.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{gradient, slice_sup_l2, Cylinder, GridError, Region, SpaceTimeField};

#[derive(Debug, Error)]
pub enum LemmaError {
    #[error("mollification parameter must be positive, got {0}")]
    NonPositiveH(f64),
    #[error("field does not vanish outside the ball: max |v| there is {boundary}, max |v| overall is {overall}")]
    BoundaryNotVanishing { boundary: f64, overall: f64 },
    #[error("invalid absorption parameters: {0}")]
    Absorption(String),
    #[error("invalid geometric iteration: {0}")]
    Geometric(String),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Weights of the kernel `(1/h) e^{-tau/h}` on one time cell of length
/// `dt`, integrated against the linear interpolant: returns the decay
/// `e^{-dt/h}` and the weights of the left and right node values.
fn cell_weights(dt: f64, h: f64) -> (f64, f64, f64) {
    let x = dt / h;
    let decay = (-x).exp();
    let one_minus = -(-x).exp_m1();
    // (1 - e^{-x}) - x e^{-x}, which cancels badly for small x
    let g = if x < 1e-3 {
        x * x * (0.5 - x / 3.0 + x * x / 8.0 - x * x * x / 30.0)
    } else {
        one_minus - x * decay
    };
    let right = g / x;
    (decay, one_minus - right, right)
}

/// `[v]_h(x,t) = (1/h) int_t^T e^{(t-s)/h} v(x,s) ds`, integrating the
/// kernel exactly against the piecewise-linear-in-time interpolant of `v`.
pub fn mollify_time(v: &SpaceTimeField, h: f64) -> Result<SpaceTimeField, LemmaError> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(LemmaError::NonPositiveH(h));
    }
    let d = v.domain();
    let (decay, w_left, w_right) = cell_weights(d.dt(), h);
    let mut out = SpaceTimeField::zeros(d.clone());
    for j in (0..d.nt).rev() {
        for s in 0..d.n_space() {
            let next = out.at(j + 1, s);
            out.slice_mut(j)[s] = w_left * v.at(j, s) + w_right * v.at(j + 1, s) + decay * next;
        }
    }
    Ok(out)
}

/// Largest `|d_t [v]_h - ([v]_h - v)/h|` over interior time levels, with the
/// time derivative taken by central differences.
pub fn mollifier_derivative_residual(v: &SpaceTimeField, h: f64) -> Result<f64, LemmaError> {
    let m = mollify_time(v, h)?;
    let d = v.domain();
    let dt = d.dt();
    let mut worst: f64 = 0.0;
    for j in 1..d.nt {
        for s in 0..d.n_space() {
            let dmdt = (m.at(j + 1, s) - m.at(j - 1, s)) / (2.0 * dt);
            let rhs = (m.at(j, s) - v.at(j, s)) / h;
            worst = worst.max((dmdt - rhs).abs());
        }
    }
    Ok(worst)
}

/// Both sides of the interpolation inequality, constant-free.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterpolationSides {
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs / rhs`, zero when both vanish.
    pub ratio: f64,
}

/// Empirical constant of
/// `mean_Q |v|^{p_a(n+2)/n} <= c (sup_t mean_B |v|^2)^{p_a/n} r^{p_a} mean_Q |Dv|^{p_a}`
/// for `v` vanishing outside the ball of the cylinder.
pub fn interpolation_ratio(
    v: &SpaceTimeField,
    cyl: &Cylinder,
    p_alpha: f64,
) -> Result<InterpolationSides, LemmaError> {
    let d = v.domain();
    let overall = v.max_abs();
    let mut boundary: f64 = 0.0;
    for s in 0..d.n_space() {
        if !cyl.contains_space(&d.coords(s)[..d.n]) {
            for j in cyl.time_levels(d) {
                boundary = boundary.max(v.at(j, s).abs());
            }
        }
    }
    if boundary > 1e-12 * overall {
        return Err(LemmaError::BoundaryNotVanishing { boundary, overall });
    }
    let n = d.n as f64;
    let region = Region::Cylinder(cyl.clone());
    let sel = d.select(&region)?;
    let m_exp = p_alpha * (n + 2.0) / n;
    let lhs = sel.integrate(v, |x| x.abs().powf(m_exp)) / sel.measure();
    let grad = gradient(v);
    let grad_mean = sel.integrate_nodes(d, |i| grad.magnitude(i).powf(p_alpha)) / sel.measure();
    let slice_mean = slice_sup_l2(v, cyl)? / sel.space_measure();
    let rhs = slice_mean.powf(p_alpha / n) * cyl.rho.powf(p_alpha) * grad_mean;
    let ratio = if lhs == 0.0 { 0.0 } else { lhs / rhs };
    Ok(InterpolationSides { lhs, rhs, ratio })
}

/// Parameters of `X_{i+1} = C lambda^i X_i^{1+kappa}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometricIteration {
    pub c: f64,
    pub lambda: f64,
    pub kappa: f64,
    pub x0: f64,
}

impl GeometricIteration {
    pub fn validate(&self) -> Result<(), LemmaError> {
        if !(self.c > 0.0 && self.lambda > 1.0 && self.kappa > 0.0 && self.x0 >= 0.0) {
            return Err(LemmaError::Geometric(format!(
                "need C > 0, lambda > 1, kappa > 0, X0 >= 0; got {self:?}"
            )));
        }
        Ok(())
    }

    /// `C^{-1/kappa} lambda^{-1/kappa^2}`
    pub fn threshold(&self) -> f64 {
        self.c.powf(-1.0 / self.kappa) * self.lambda.powf(-1.0 / (self.kappa * self.kappa))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometricTrace {
    pub values: Vec<f64>,
    /// Some `X_i < 1e-12` within the iteration budget.
    pub converged: bool,
    /// A value overflowed.
    pub diverged: bool,
}

pub const GEOMETRIC_TOL: f64 = 1e-12;

pub fn geometric_iterate(
    g: &GeometricIteration,
    max_iter: usize,
) -> Result<GeometricTrace, LemmaError> {
    g.validate()?;
    let mut values = vec![g.x0];
    let mut x = g.x0;
    let mut lambda_pow = 1.0;
    let (mut converged, mut diverged) = (x < GEOMETRIC_TOL, false);
    for _ in 0..max_iter {
        if converged {
            break;
        }
        x = g.c * lambda_pow * x.powf(1.0 + g.kappa);
        lambda_pow *= g.lambda;
        if !x.is_finite() {
            diverged = true;
            break;
        }
        values.push(x);
        converged = x < GEOMETRIC_TOL;
    }
    if !converged && !diverged && x > 1.0 / GEOMETRIC_TOL {
        diverged = true;
    }
    Ok(GeometricTrace {
        values,
        converged,
        diverged,
    })
}

/// Hypothesis data of the absorption lemma on `[rho, sigma]`:
/// `f(r) <= theta f(s) + A/(s-r)^a + B/(s-r)^b + C/(s-r)^c + D`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbsorptionParams {
    pub theta: f64,
    pub coef_a: f64,
    pub coef_b: f64,
    pub coef_c: f64,
    pub coef_d: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub rho: f64,
    pub sigma: f64,
}

impl AbsorptionParams {
    pub fn validate(&self) -> Result<(), LemmaError> {
        let bad = |msg: &str| Err(LemmaError::Absorption(msg.to_string()));
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return bad("theta must lie in (0, 1)");
        }
        if [self.coef_a, self.coef_b, self.coef_c, self.coef_d]
            .iter()
            .any(|&v| !(v >= 0.0))
        {
            return bad("A, B, C, D must be nonnegative");
        }
        if !(self.a >= self.b && self.b >= self.c && self.c >= 0.0) {
            return bad("exponents must satisfy a >= b >= c >= 0");
        }
        if !(self.rho < self.sigma) {
            return bad("need rho < sigma");
        }
        Ok(())
    }

    /// Right-hand side of the hypothesis for a pair `r < s`, without the
    /// `theta f(s)` term.
    pub fn forcing(&self, r: f64, s: f64) -> f64 {
        let gap = s - r;
        self.coef_a / gap.powf(self.a)
            + self.coef_b / gap.powf(self.b)
            + self.coef_c / gap.powf(self.c)
            + self.coef_d
    }
}

/// The lemma's conclusion with unit constant:
/// `A/(sigma-rho)^a + B/(sigma-rho)^b + C/(sigma-rho)^c + D`.
pub fn absorption_bound(params: &AbsorptionParams) -> Result<f64, LemmaError> {
    params.validate()?;
    Ok(params.forcing(params.rho, params.sigma))
}
