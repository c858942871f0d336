//! The sup-bound machinery on sampled fields: both sides of the Caccioppoli
//! inequality, the level `k` of the De Giorgi iteration, the closed-form
//! bounds, the iteration trace `X_i` with a fitted recursion, and an
//! end-to-end check of `ess sup u <= k` on half cylinders.
//!
//! Unknown constants of the estimates are calibration inputs that multiply
//! the first term of each level formula only; all other terms carry unit
//! constants.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exponents::{epsilon_threshold, DerivedExponents, StructureParams};
use crate::grid::{
    ess_sup, gradient, mean_integral, slice_sup_l2, truncate_plus, CoefficientNorms, Cylinder,
    GridError, Region, SpaceTimeField,
};

#[derive(Debug, Error)]
pub enum DeGiorgiError {
    #[error("invalid cylinder geometry: {0}")]
    Geometry(String),
    #[error("invalid level inputs: {0}")]
    Inputs(String),
    #[error("the term with exponent 1/(q-p) does not exist for q = p")]
    EqualExponentTerm,
    #[error("level term is infinite: {0}")]
    Unbounded(String),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Both sides of the Caccioppoli inequality with unit constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaccioppoliSides {
    /// Sup-slice term, gradient term, eps term.
    pub lhs_terms: [f64; 3],
    pub lhs: f64,
    /// `mu`-term, gamma-term, eps-term, time-term.
    pub rhs_terms: [f64; 4],
    /// `lhs / sum(rhs_terms)`, zero when the truncation vanishes.
    pub c_min: f64,
}

fn quotient(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else if den == 0.0 {
        f64::INFINITY
    } else {
        num / den
    }
}

fn integral(f: &SpaceTimeField, r: f64, region: &Region) -> Result<f64, GridError> {
    let sel = f.domain().select(region)?;
    Ok(sel.integrate(f, |v| v.abs().powf(r)))
}

/// Evaluates the Caccioppoli inequality for `(u-k)_+` on
/// `inner = Q_{rho,sigma}` inside `outer = Q_{r,s}`. Coefficient norms are
/// the raw Lebesgue norms over the outer cylinder; gradients are nodal
/// central differences.
pub fn caccioppoli_sides(
    u: &SpaceTimeField,
    k: f64,
    inner: &Cylinder,
    outer: &Cylinder,
    a: &SpaceTimeField,
    b: &SpaceTimeField,
    params: &StructureParams,
    d: &DerivedExponents,
) -> Result<CaccioppoliSides, DeGiorgiError> {
    if !(outer.rho > inner.rho && outer.sigma > inner.sigma) {
        return Err(DeGiorgiError::Geometry(format!(
            "need r > rho and s > sigma, got r = {}, rho = {}, s = {}, sigma = {}",
            outer.rho, inner.rho, outer.sigma, inner.sigma
        )));
    }
    if inner.center != outer.center || inner.t != outer.t {
        return Err(DeGiorgiError::Geometry(
            "cylinders must be concentric".into(),
        ));
    }
    if !outer.is_interior(u.domain()) {
        return Err(DeGiorgiError::Geometry(
            "outer cylinder touches the parabolic boundary".into(),
        ));
    }
    let w = truncate_plus(u, k);
    let inner_region = Region::Cylinder(inner.clone());
    let outer_region = Region::Cylinder(outer.clone());
    let norms = CoefficientNorms::compute(a, b, params.alpha, params.beta, &outer_region)?;
    let (raw_a, raw_b) = (norms.raw_a, norms.raw_b);

    let grad = gradient(&w).magnitude_field(u.domain());
    let alpha_exp = if params.alpha.is_infinite() {
        1.0
    } else {
        (params.alpha + 1.0) / params.alpha
    };
    let slice_term = slice_sup_l2(&w, inner)?;
    let grad_term =
        quotient(1.0, raw_a) * integral(&grad, d.p_alpha, &inner_region)?.powf(alpha_exp);
    let eps_lhs = params.eps * integral(&grad, d.q_beta, &inner_region)?;
    let lhs_terms = [slice_term, grad_term, eps_lhs];

    let gap = outer.rho - inner.rho;
    let mu_term = if params.mu == 0.0 {
        0.0
    } else {
        params.mu.powf(params.q - 1.0) / gap
            * raw_b
            * integral(&w, d.beta_conj, &outer_region)?.powf(1.0 / d.beta_conj)
    };
    let gamma_base = raw_b
        * raw_a.powf((params.q - 1.0) / params.p)
        * integral(&w, d.gamma, &outer_region)?.powf(1.0 / d.gamma)
        / gap;
    let gamma_term = gamma_base.powf(d.intrinsic);
    let eps_rhs = params.eps / gap.powf(d.q_beta) * integral(&w, d.q_beta, &outer_region)?;
    let time_term = integral(&w, 2.0, &outer_region)? / (outer.sigma - inner.sigma);
    let rhs_terms = [mu_term, gamma_term, eps_rhs, time_term];
    let lhs = lhs_terms.iter().sum();
    Ok(CaccioppoliSides {
        lhs_terms,
        lhs,
        rhs_terms,
        c_min: quotient(lhs, rhs_terms.iter().sum()),
    })
}

/// Data entering the level formula, all taken on `Q_{2 rho, 2 sigma}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelInputs {
    /// `(mean a^{-alpha})^{1/alpha}`
    pub norm_a: f64,
    /// `(mean b^beta)^{1/beta}`
    pub norm_b: f64,
    /// `mean u_+^m`
    pub mean_u_m: f64,
    pub rho: f64,
    pub sigma: f64,
    pub mu: f64,
}

impl LevelInputs {
    fn validate(&self) -> Result<(), DeGiorgiError> {
        let ok = self.norm_a > 0.0
            && self.norm_b > 0.0
            && self.mean_u_m >= 0.0
            && self.rho > 0.0
            && self.sigma > 0.0
            && self.mu >= 0.0
            && [
                self.norm_a,
                self.norm_b,
                self.mean_u_m,
                self.rho,
                self.sigma,
                self.mu,
            ]
            .iter()
            .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(DeGiorgiError::Inputs(format!("{self:?}")))
        }
    }
}

/// `base^e` for the exponent `(p+1-q)/(p-2+2(q-p))`, which is `1/0` when
/// `p = q = 2`: the power is then 1 for base 1, 0 for base below 1, and
/// undefined above.
fn balance_power(base: f64, params: &StructureParams) -> Result<f64, DeGiorgiError> {
    let den = params.p - 2.0 + 2.0 * (params.q - params.p);
    if den > 0.0 {
        return Ok(base.powf((params.p + 1.0 - params.q) / den));
    }
    let rel = (base - 1.0).abs();
    if rel <= 1e-12 {
        Ok(1.0)
    } else if base < 1.0 {
        Ok(0.0)
    } else {
        Err(DeGiorgiError::Unbounded(format!(
            "time-scale base {base} exceeds 1 with exponent 1/0 at p = q = 2"
        )))
    }
}

/// The five terms of the level choice; the last is absent when `q = p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelTerms {
    pub terms: [Option<f64>; 5],
}

impl LevelTerms {
    pub fn max(&self) -> f64 {
        self.terms.iter().flatten().fold(0.0, |m, &t| m.max(t))
    }

    /// The largest term other than the first.
    pub fn max_without_first(&self) -> f64 {
        self.terms[1..].iter().flatten().fold(0.0, |m, &t| m.max(t))
    }
}

pub fn level_terms(
    inputs: &LevelInputs,
    d: &DerivedExponents,
    params: &StructureParams,
    c_cal: f64,
) -> Result<LevelTerms, DeGiorgiError> {
    inputs.validate()?;
    let LevelInputs {
        norm_a: a,
        norm_b: b,
        mean_u_m: x,
        rho,
        sigma,
        mu,
    } = *inputs;
    let ab = a * b;
    let big_p = d.intrinsic;
    let t1 = c_cal
        * (sigma / a * (ab / rho).powf(big_p)).powf(d.theta1)
        * (ab / rho.powf(params.q - params.p)).powf(d.theta2)
        * x.powf(d.theta3);
    let t2 = x.powf(1.0 / d.m);
    let t3 = balance_power(a / sigma * (rho / ab).powf(big_p), params)?;
    let t4 = if mu == 0.0 {
        0.0
    } else {
        rho * mu.powf(params.p + 1.0 - params.q) / ab
    };
    let t5 = if d.q_equals_p {
        None
    } else {
        Some(rho / ab.powf(1.0 / (params.q - params.p)))
    };
    Ok(LevelTerms {
        terms: [Some(t1), Some(t2), Some(t3), Some(t4), t5],
    })
}

/// A single level term by one-based index; the fifth fails for `q = p`.
pub fn level_term(
    inputs: &LevelInputs,
    d: &DerivedExponents,
    params: &StructureParams,
    c_cal: f64,
    index: usize,
) -> Result<f64, DeGiorgiError> {
    if !(1..=5).contains(&index) {
        return Err(DeGiorgiError::Inputs(format!(
            "term index {index} outside 1..=5"
        )));
    }
    level_terms(inputs, d, params, c_cal)?.terms[index - 1].ok_or(DeGiorgiError::EqualExponentTerm)
}

/// The level `k` of the De Giorgi iteration.
pub fn choose_level_k(
    inputs: &LevelInputs,
    d: &DerivedExponents,
    params: &StructureParams,
    c_cal: f64,
) -> Result<f64, DeGiorgiError> {
    Ok(level_terms(inputs, d, params, c_cal)?.max())
}

/// The four-term bound without coefficient dependence:
/// `max{c (sigma/rho^P)^{th1} rho^{-(q-p) th2} X^{th3}, X^{1/m}, (rho^P/sigma)^e, rho}`.
pub fn theorem_bound(
    mean_u_m: f64,
    rho: f64,
    sigma: f64,
    d: &DerivedExponents,
    params: &StructureParams,
    c_cal: f64,
) -> Result<f64, DeGiorgiError> {
    if !(mean_u_m >= 0.0 && rho > 0.0 && sigma > 0.0) {
        return Err(DeGiorgiError::Inputs(format!(
            "mean {mean_u_m}, rho {rho}, sigma {sigma}"
        )));
    }
    let big_p = d.intrinsic;
    let t1 = c_cal
        * (sigma / rho.powf(big_p)).powf(d.theta1)
        * rho.powf(-(params.q - params.p) * d.theta2)
        * mean_u_m.powf(d.theta3);
    let t2 = mean_u_m.powf(1.0 / d.m);
    let t3 = balance_power(rho.powf(big_p) / sigma, params)?;
    Ok(t1.max(t2).max(t3).max(rho))
}

/// The intrinsic form `max{c rho^{-(q-p) th2} X^{th3}, X^{1/m}, 1}` for
/// `sigma = rho^P` and `rho <= 1`.
pub fn remark_bound(
    mean_u_m: f64,
    rho: f64,
    sigma: f64,
    d: &DerivedExponents,
    params: &StructureParams,
    c_cal: f64,
) -> Result<f64, DeGiorgiError> {
    if rho > 1.0 {
        return Err(DeGiorgiError::Geometry(format!(
            "intrinsic form needs rho <= 1, got {rho}"
        )));
    }
    let expected = rho.powf(d.intrinsic);
    if (sigma - expected).abs() > 1e-12 * sigma.max(1.0) {
        return Err(DeGiorgiError::Geometry(format!(
            "sigma = {sigma} is not rho^P = {expected}"
        )));
    }
    if !(mean_u_m >= 0.0 && rho > 0.0) {
        return Err(DeGiorgiError::Inputs(format!("mean {mean_u_m}, rho {rho}")));
    }
    let t1 = c_cal * rho.powf(-(params.q - params.p) * d.theta2) * mean_u_m.powf(d.theta3);
    Ok(t1.max(mean_u_m.powf(1.0 / d.m)).max(1.0))
}

/// One level of the iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub rho: f64,
    pub sigma: f64,
    pub k: f64,
    /// `mean_{Q_i} (u - k_i)_+^m`
    pub x: f64,
    /// `X_{i+1} / (lambda^i X_i^{1+kappa})` with the fitted `lambda`; absent for the last step.
    pub c: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeGiorgiTrace {
    pub center: Vec<f64>,
    pub t: f64,
    pub k: f64,
    pub kappa: f64,
    pub steps: Vec<TraceStep>,
    /// Fitted `lambda >= 1` and the smallest `C` making every step hold.
    pub lambda: f64,
    pub c_fit: f64,
    /// `C^{-1/kappa} lambda^{-1/kappa^2}`
    pub threshold: f64,
    /// `X_0` below the threshold.
    pub converges: bool,
    pub monotone: bool,
    pub warnings: Vec<String>,
}

/// Smallest admissible `C` for a given `lambda`.
fn fit_c(xs: &[f64], lambda: f64, kappa: f64) -> f64 {
    let mut c: f64 = 0.0;
    for i in 0..xs.len().saturating_sub(1) {
        let (x0, x1) = (xs[i], xs[i + 1]);
        if x1 == 0.0 {
            continue;
        }
        let denom = lambda.powi(i as i32) * x0.powf(1.0 + kappa);
        c = c.max(if denom > 0.0 {
            x1 / denom
        } else {
            f64::INFINITY
        });
    }
    c
}

fn threshold(c: f64, lambda: f64, kappa: f64) -> f64 {
    if c == 0.0 {
        return f64::INFINITY;
    }
    c.powf(-1.0 / kappa) * lambda.powf(-1.0 / (kappa * kappa))
}

/// Levels `k_i = k(1 - 2^{-i})` on cylinders `Q_{rho_i, sigma_i}` with
/// `rho_i = rho(1 + 2^{-i})`, `i = 0..=i_max`. The recursion
/// `X_{i+1} <= C lambda^i X_i^{1+kappa}` is fitted by scanning `lambda` on a
/// log grid in `[1, 1e6]` for the largest convergence threshold.
pub fn trace(
    u: &SpaceTimeField,
    center: &[f64],
    t: f64,
    rho: f64,
    sigma: f64,
    k: f64,
    d: &DerivedExponents,
    i_max: usize,
) -> Result<DeGiorgiTrace, DeGiorgiError> {
    let dom = u.domain();
    let base = Cylinder::new(center.to_vec(), t, 2.0 * rho, 2.0 * sigma);
    if !base.is_interior(dom) {
        return Err(DeGiorgiError::Geometry(
            "Q_{2rho,2sigma} touches the parabolic boundary".into(),
        ));
    }
    let mut warnings = Vec::new();
    let mut steps = Vec::new();
    for i in 0..=i_max {
        let f = 0.5f64.powi(i as i32);
        let cyl = Cylinder::new(center.to_vec(), t, rho * (1.0 + f), sigma * (1.0 + f));
        let (space_nodes, time_nodes) = cyl.resolution(dom);
        if space_nodes < 3 || time_nodes < 3 {
            warnings.push(format!(
                "trace truncated at i = {i}: cylinder resolves {space_nodes} nodes per axis and {time_nodes} time levels"
            ));
            break;
        }
        let k_i = k * (1.0 - f);
        let x = mean_integral(&truncate_plus(u, k_i), d.m, &Region::Cylinder(cyl.clone()))?;
        steps.push(TraceStep {
            rho: cyl.rho,
            sigma: cyl.sigma,
            k: k_i,
            x,
            c: None,
        });
    }
    if steps.is_empty() {
        return Err(DeGiorgiError::Geometry(
            "no resolved cylinder in the trace".into(),
        ));
    }
    let h = (0..dom.n)
        .map(|a| dom.spacing(a))
        .fold(f64::INFINITY, f64::min);
    if let Some(i) = (0..steps.len()).find(|&i| rho * 0.5f64.powi(i as i32 + 1) < h) {
        if i + 1 < steps.len() {
            warnings.push(format!(
                "radius decrements fall below the grid spacing from i = {}",
                i + 1
            ));
        }
    }
    let xs: Vec<f64> = steps.iter().map(|s| s.x).collect();
    let kappa = d.kappa;
    let (mut lambda, mut c_fit, mut best) = (1.0, fit_c(&xs, 1.0, kappa), f64::NEG_INFINITY);
    for j in 0..=600 {
        let l = 10f64.powf(6.0 * j as f64 / 600.0);
        let c = fit_c(&xs, l, kappa);
        let th = threshold(c, l, kappa);
        if th > best {
            best = th;
            lambda = l;
            c_fit = c;
        }
    }
    for i in 0..steps.len().saturating_sub(1) {
        let denom = lambda.powi(i as i32) * xs[i].powf(1.0 + kappa);
        steps[i].c = Some(quotient(xs[i + 1], denom));
    }
    let monotone = xs.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12));
    let threshold = threshold(c_fit, lambda, kappa);
    Ok(DeGiorgiTrace {
        center: center.to_vec(),
        t,
        k,
        kappa,
        steps,
        lambda,
        c_fit,
        threshold,
        converges: xs[0] <= threshold,
        monotone,
        warnings,
    })
}

/// Measured sup against the predicted levels on one cylinder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub center: Vec<f64>,
    pub t: f64,
    pub rho: f64,
    pub sigma: f64,
    pub mu: f64,
    pub eps: f64,
    pub c_cal: f64,
    pub inputs: LevelInputs,
    pub terms: LevelTerms,
    pub k_choice: f64,
    pub k_theorem: f64,
    /// Node maximum of `u` over `Q_{rho,sigma}`.
    pub ess_sup: f64,
    /// `k_choice / ess_sup`.
    pub margin: f64,
    pub eps_threshold: f64,
    pub eps_ok: bool,
    /// Smallest first-term constant for which `ess_sup <= k_choice`.
    pub calibration_needed: f64,
    pub pass: bool,
}

/// Checks `ess sup_{Q_{rho,sigma}} u <= k` with `k` from the level choice on
/// `Q = Q_{2rho,2sigma}(x_o, t_o)`.
pub fn verify_sup_bound(
    u: &SpaceTimeField,
    center: &[f64],
    t: f64,
    rho: f64,
    sigma: f64,
    a: &SpaceTimeField,
    b: &SpaceTimeField,
    params: &StructureParams,
    d: &DerivedExponents,
    c_cal: f64,
) -> Result<BoundReport, DeGiorgiError> {
    let dom = u.domain();
    if center.len() != dom.n {
        return Err(DeGiorgiError::Geometry(format!(
            "center has {} coordinates, grid has {}",
            center.len(),
            dom.n
        )));
    }
    let outer = Cylinder::new(center.to_vec(), t, 2.0 * rho, 2.0 * sigma);
    if !outer.is_interior(dom) {
        return Err(DeGiorgiError::Geometry(format!(
            "Q_(2rho,2sigma) around {center:?}, t = {t} with rho = {rho}, sigma = {sigma} touches the parabolic boundary"
        )));
    }
    let region = Region::Cylinder(outer);
    let norms = CoefficientNorms::compute(a, b, params.alpha, params.beta, &region)?;
    let mean_u_m = mean_integral(&u.map(|v| v.max(0.0)), d.m, &region)?;
    let inputs = LevelInputs {
        norm_a: norms.norm_a,
        norm_b: norms.norm_b,
        mean_u_m,
        rho,
        sigma,
        mu: params.mu,
    };
    let terms = level_terms(&inputs, d, params, c_cal)?;
    let k_choice = terms.max();
    let k_theorem = theorem_bound(mean_u_m, rho, sigma, d, params, c_cal)?;
    let half = Region::Cylinder(Cylinder::new(center.to_vec(), t, rho, sigma));
    let sup = ess_sup(u, &half)?;
    let eps_threshold = epsilon_threshold(k_choice, rho, norms.norm_a, norms.norm_b, d, params);
    let first_unit = terms.terms[0].unwrap_or(0.0) / c_cal;
    let calibration_needed = if sup <= terms.max_without_first() {
        0.0
    } else {
        quotient(sup, first_unit)
    };
    Ok(BoundReport {
        center: center.to_vec(),
        t,
        rho,
        sigma,
        mu: params.mu,
        eps: params.eps,
        c_cal,
        inputs,
        terms,
        k_choice,
        k_theorem,
        ess_sup: sup,
        margin: if sup > 0.0 {
            k_choice / sup
        } else {
            f64::INFINITY
        },
        eps_threshold,
        eps_ok: params.eps <= eps_threshold,
        calibration_needed,
        pass: sup <= k_choice,
    })
}
