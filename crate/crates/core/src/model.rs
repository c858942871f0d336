//! Coefficient presets, the model integrand with its flux, and pointwise
//! checks of the growth and coercivity conditions.
//!
//! The model integrand is
//! `f(x,t,xi) = (a/p) w^{p/2} + (b/q) w^{q/2} + eps |xi|^{q_beta}` with
//! `w = mu^2 + |xi|^2`, whose flux is `kappa(|xi|) xi` for the scalar
//! diffusivity returned by [`Integrand::diffusivity`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exponents::{derive, DerivedExponents, ParamError, StructureParams};
use crate::grid::{Domain, SpaceTimeField};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid coefficient: {0}")]
    Coefficient(String),
    #[error(transparent)]
    Params(#[from] ParamError),
}

/// A nonnegative coefficient field on `Omega_T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum CoefficientKind {
    Constant {
        value: f64,
    },
    /// `max(|x - center|, floor)^exponent`
    Power {
        center: Vec<f64>,
        exponent: f64,
        floor: f64,
    },
    /// `low` on cells with even index sum, `high` on the others.
    Checkerboard {
        low: f64,
        high: f64,
        period: f64,
    },
}

impl CoefficientKind {
    pub fn validate(&self, n: usize) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::Coefficient(m));
        match self {
            Self::Constant { value } => {
                if !(value.is_finite() && *value >= 0.0) {
                    return bad(format!(
                        "constant value must be finite and >= 0, got {value}"
                    ));
                }
            }
            Self::Power {
                center,
                exponent,
                floor,
            } => {
                if center.len() != n {
                    return bad(format!(
                        "power center has {} coordinates, expected {n}",
                        center.len()
                    ));
                }
                if !exponent.is_finite() || center.iter().any(|c| !c.is_finite()) {
                    return bad("power center and exponent must be finite".into());
                }
                if !(floor.is_finite() && *floor >= 0.0) {
                    return bad(format!("power floor must be finite and >= 0, got {floor}"));
                }
            }
            Self::Checkerboard { low, high, period } => {
                if !(low.is_finite() && high.is_finite() && *low >= 0.0 && *high >= 0.0) {
                    return bad("checkerboard values must be finite and >= 0".into());
                }
                if !(period.is_finite() && *period > 0.0) {
                    return bad(format!(
                        "checkerboard period must be positive, got {period}"
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64], _t: f64) -> f64 {
        match self {
            Self::Constant { value } => *value,
            Self::Power {
                center,
                exponent,
                floor,
            } => {
                let r = x
                    .iter()
                    .zip(center)
                    .map(|(a, c)| (a - c).powi(2))
                    .sum::<f64>()
                    .sqrt();
                r.max(*floor).powf(*exponent)
            }
            Self::Checkerboard { low, high, period } => {
                let parity: i64 = x.iter().map(|xi| (xi / period).floor() as i64).sum();
                if parity.rem_euclid(2) == 0 {
                    *low
                } else {
                    *high
                }
            }
        }
    }

    pub fn sample(&self, domain: &Domain) -> SpaceTimeField {
        SpaceTimeField::from_fn(domain.clone(), |x, t| self.eval(x, t))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSpec {
    pub a: CoefficientKind,
    pub b: CoefficientKind,
}

impl CoefficientSpec {
    pub fn constant(a: f64, b: f64) -> Self {
        Self {
            a: CoefficientKind::Constant { value: a },
            b: CoefficientKind::Constant { value: b },
        }
    }

    pub fn validate(&self, n: usize) -> Result<(), ModelError> {
        self.a.validate(n)?;
        self.b.validate(n)
    }
}

/// The pointwise part of the integrand: exponents, `mu` and `eps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Integrand {
    pub p: f64,
    pub q: f64,
    pub mu: f64,
    pub eps: f64,
    pub q_beta: f64,
}

fn pow_or_one(base: f64, e: f64) -> f64 {
    // 0^0 = 1 keeps the linear case p = 2 at mu = 0 finite
    if e == 0.0 {
        1.0
    } else {
        base.powf(e)
    }
}

impl Integrand {
    pub fn new(params: &StructureParams, d: &DerivedExponents) -> Self {
        Self {
            p: params.p,
            q: params.q,
            mu: params.mu,
            eps: params.eps,
            q_beta: d.q_beta,
        }
    }

    /// `kappa` with `flux = kappa * xi`, given `|xi|^2`.
    pub fn diffusivity(&self, norm2: f64, a: f64, b: f64) -> f64 {
        let w = self.mu * self.mu + norm2;
        let mut k =
            a * pow_or_one(w, 0.5 * (self.p - 2.0)) + b * pow_or_one(w, 0.5 * (self.q - 2.0));
        if self.eps > 0.0 {
            k += self.eps * self.q_beta * pow_or_one(norm2, 0.5 * (self.q_beta - 2.0));
        }
        k
    }

    pub fn flux(&self, xi: &[f64], a: f64, b: f64) -> Vec<f64> {
        let k = self.diffusivity(norm2(xi), a, b);
        xi.iter().map(|x| k * x).collect()
    }

    pub fn value(&self, xi: &[f64], a: f64, b: f64) -> f64 {
        self.value_norm2(norm2(xi), a, b)
    }

    pub fn value_norm2(&self, norm2: f64, a: f64, b: f64) -> f64 {
        let w = self.mu * self.mu + norm2;
        let mut f = a / self.p * w.powf(0.5 * self.p) + b / self.q * w.powf(0.5 * self.q);
        if self.eps > 0.0 {
            f += self.eps * norm2.powf(0.5 * self.q_beta);
        }
        f
    }

    /// Hessian eigenvalues at `|xi| = s`: radial `(kappa s)'` and tangential
    /// `kappa`.
    pub fn hessian_eigenvalues(&self, s: f64, a: f64, b: f64) -> (f64, f64) {
        let s2 = s * s;
        let w = self.mu * self.mu + s2;
        let k = self.diffusivity(s2, a, b);
        // s kappa'(s), written with s^2/w <= 1 to stay finite at w = 0
        let ratio = if w > 0.0 { s2 / w } else { 0.0 };
        let term = |c: f64, e: f64| {
            if c == 0.0 || e == 2.0 {
                0.0
            } else {
                c * (e - 2.0) * pow_or_one(w, 0.5 * (e - 2.0)) * ratio
            }
        };
        let mut sk = term(a, self.p) + term(b, self.q);
        if self.eps > 0.0 && self.q_beta != 2.0 {
            sk += self.eps * self.q_beta * (self.q_beta - 2.0) * s.powf(self.q_beta - 2.0);
        }
        (k + sk, k)
    }
}

pub fn norm2(xi: &[f64]) -> f64 {
    xi.iter().map(|x| x * x).sum()
}

/// Structure parameters together with the coefficient presets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegrandSpec {
    pub params: StructureParams,
    pub coefficients: CoefficientSpec,
}

impl IntegrandSpec {
    pub fn new(params: StructureParams, coefficients: CoefficientSpec) -> Result<Self, ModelError> {
        derive(&params)?;
        coefficients.validate(params.n)?;
        Ok(Self {
            params,
            coefficients,
        })
    }

    /// The regularized integrand `f + eps |xi|^{q_beta}`.
    pub fn with_eps(&self, eps: f64) -> Self {
        Self {
            params: self.params.with_eps(eps),
            coefficients: self.coefficients.clone(),
        }
    }

    pub fn exponents(&self) -> DerivedExponents {
        derive(&self.params).expect("validated on construction")
    }

    pub fn integrand(&self) -> Integrand {
        Integrand::new(&self.params, &self.exponents())
    }

    pub fn a(&self, x: &[f64], t: f64) -> f64 {
        self.coefficients.a.eval(x, t)
    }

    pub fn b(&self, x: &[f64], t: f64) -> f64 {
        self.coefficients.b.eval(x, t)
    }
}

/// Outcome of sampling the growth and coercivity conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureReport {
    /// Smallest `c` with `|D f| <= c (b w^{(q-1)/2} + q_beta eps |xi|^{q_beta-1})` on the samples.
    pub upper_constant: f64,
    /// Largest `c` with `<D f, xi> >= c (a w^{(p-2)/2} |xi|^2 + q_beta eps |xi|^{q_beta})`.
    pub lower_constant: f64,
    /// Fraction of space-time nodes where the upper bound fails with constant 1.
    pub upper_violation_fraction: f64,
    /// Space-time measure of those nodes (nodes weighted by cell volume times `dt`).
    pub upper_violation_measure: f64,
    /// Fraction of nodes where the lower bound fails with constant 1.
    pub lower_violation_fraction: f64,
    /// Smallest Hessian eigenvalue seen.
    pub min_hessian_eigenvalue: f64,
    pub samples: usize,
}

const CONSTANT_TOL: f64 = 1e-12;

/// Samples every node of `domain` against `shells` log-spaced gradient
/// magnitudes in `[1e-6, 1e6]`. The model is isotropic, so one direction
/// per magnitude suffices.
pub fn check_structure(spec: &IntegrandSpec, domain: &Domain, shells: usize) -> StructureReport {
    let f = spec.integrand();
    let shells = shells.max(2);
    let radii: Vec<f64> = (0..shells)
        .map(|k| 10f64.powf(-6.0 + 12.0 * k as f64 / (shells - 1) as f64))
        .collect();
    let mut upper_constant: f64 = 0.0;
    let mut lower_constant = f64::INFINITY;
    let mut min_eig = f64::INFINITY;
    let (mut upper_bad, mut lower_bad) = (0usize, 0usize);
    for j in 0..domain.n_time() {
        let t = domain.time(j);
        for s in 0..domain.n_space() {
            let x = domain.coords(s);
            let (a, b) = (spec.a(&x[..domain.n], t), spec.b(&x[..domain.n], t));
            let (mut node_upper, mut node_lower) = (0.0f64, f64::INFINITY);
            for &r in &radii {
                let w = f.mu * f.mu + r * r;
                let k = f.diffusivity(r * r, a, b);
                let eps_up = f.q_beta * f.eps * r.powf(f.q_beta - 1.0);
                let eps_low = f.q_beta * f.eps * r.powf(f.q_beta);
                let up = ratio(k * r, b * w.powf(0.5 * (f.q - 1.0)) + eps_up);
                let low = ratio(
                    k * r * r,
                    a * pow_or_one(w, 0.5 * (f.p - 2.0)) * r * r + eps_low,
                );
                node_upper = node_upper.max(up);
                node_lower = node_lower.min(low);
                let (e1, e2) = f.hessian_eigenvalues(r, a, b);
                min_eig = min_eig.min(e1.min(e2));
            }
            upper_constant = upper_constant.max(node_upper);
            lower_constant = lower_constant.min(node_lower);
            upper_bad += usize::from(node_upper > 1.0 + CONSTANT_TOL);
            lower_bad += usize::from(node_lower < 1.0 - CONSTANT_TOL);
        }
    }
    let total = domain.len();
    StructureReport {
        upper_constant,
        lower_constant,
        upper_violation_fraction: upper_bad as f64 / total as f64,
        upper_violation_measure: upper_bad as f64 * domain.cell_volume() * domain.dt(),
        lower_violation_fraction: lower_bad as f64 / total as f64,
        min_hessian_eigenvalue: min_eig,
        samples: total * shells,
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        if den == 0.0 {
            1.0
        } else {
            0.0
        }
    } else if den == 0.0 {
        f64::INFINITY
    } else {
        num / den
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn integrand(p: f64, q: f64, mu: f64, eps: f64) -> Integrand {
        let params = StructureParams::new(2, p, q, 20.0, 20.0)
            .with_mu(mu)
            .with_eps(eps);
        Integrand::new(&params, &derive(&params).unwrap())
    }

    #[test]
    fn flux_examples() {
        let f = integrand(2.0, 2.0, 0.0, 0.0);
        assert_eq!(f.flux(&[0.0, 0.0], 1.0, 1.0), vec![0.0, 0.0]);
        assert_eq!(f.flux(&[0.3, -1.2], 1.0, 1.0), vec![0.6, -2.4]);
        let f3 = Integrand {
            p: 2.0,
            q: 3.0,
            mu: 0.0,
            eps: 0.0,
            q_beta: 3.0,
        };
        assert_eq!(f3.flux(&[1.0, 0.0], 1.0, 2.0), vec![3.0, 0.0]);
        assert_eq!(
            integrand(2.0, 2.1, 0.0, 0.0).flux(&[0.0, 0.0], 1.0, 1.0),
            vec![0.0, 0.0]
        );
    }

    #[test]
    fn integrand_examples() {
        let f = integrand(2.0, 2.0, 0.0, 0.0);
        assert_eq!(f.value(&[0.0, 0.0], 1.0, 1.0), 0.0);
        assert_eq!(f.value(&[0.6, 0.8], 1.0, 1.0), 1.0);
        let reg = integrand(2.0, 2.1, 0.0, 0.1);
        let base = integrand(2.0, 2.1, 0.0, 0.0);
        assert_relative_eq!(
            reg.value(&[1.0, 0.0], 1.0, 1.0),
            base.value(&[1.0, 0.0], 1.0, 1.0) + 0.1,
            epsilon = 1e-15
        );
    }

    #[test]
    fn coefficient_presets() {
        let p = CoefficientKind::Power {
            center: vec![0.5, 0.5],
            exponent: 0.5,
            floor: 0.0,
        };
        assert_relative_eq!(p.eval(&[0.5, 0.75], 0.0), 0.5, epsilon = 1e-15);
        let floored = CoefficientKind::Power {
            center: vec![0.5],
            exponent: -1.0,
            floor: 0.1,
        };
        assert_eq!(floored.eval(&[0.5], 0.0), 10.0);
        let c = CoefficientKind::Checkerboard {
            low: 1.0,
            high: 5.0,
            period: 0.5,
        };
        assert_eq!(c.eval(&[0.1, 0.1], 0.0), 1.0);
        assert_eq!(c.eval(&[0.6, 0.1], 0.0), 5.0);
        assert_eq!(c.eval(&[0.6, 0.6], 0.0), 1.0);
        assert!(CoefficientKind::Constant { value: -1.0 }
            .validate(1)
            .is_err());
        assert!(p.validate(1).is_err());
        assert!(CoefficientKind::Checkerboard {
            low: 1.0,
            high: 1.0,
            period: 0.0
        }
        .validate(2)
        .is_err());
    }

    #[test]
    fn structure_equal_coefficients() {
        let params = StructureParams::new(2, 2.0, 2.0, f64::INFINITY, f64::INFINITY);
        let spec = IntegrandSpec::new(params, CoefficientSpec::constant(1.0, 1.0)).unwrap();
        let dom = Domain::unit(2, 1.0, 5, 4).unwrap();
        let r = check_structure(&spec, &dom, 25);
        // with p = q the two terms add up to exactly twice the b-term
        assert_relative_eq!(r.upper_constant, 2.0, epsilon = 1e-12);
        assert!(r.lower_constant >= 1.0);
        assert_eq!(r.lower_violation_fraction, 0.0);
        assert!(r.min_hessian_eigenvalue > 0.0);
    }

    #[test]
    fn structure_dominant_a_flags_violation() {
        let params = StructureParams::new(2, 2.0, 2.0, f64::INFINITY, f64::INFINITY).with_mu(1.0);
        let dom = Domain::unit(2, 1.0, 5, 4).unwrap();
        let dominant = IntegrandSpec::new(params, CoefficientSpec::constant(2.0, 1.0)).unwrap();
        let r = check_structure(&dominant, &dom, 13);
        assert_eq!(r.upper_violation_fraction, 1.0);
        assert!(r.upper_violation_measure > 0.0);
        assert_relative_eq!(r.upper_constant, 3.0, max_relative = 1e-9);

        let b_only = IntegrandSpec::new(params, CoefficientSpec::constant(0.0, 1.0)).unwrap();
        let r = check_structure(&b_only, &dom, 13);
        assert_eq!(r.upper_violation_fraction, 0.0);
        assert!(r.upper_constant <= 1.0 + 1e-12);
    }

    #[test]
    fn structure_regularized_lower_bound_exact() {
        let params = StructureParams::new(2, 2.0, 2.1, 20.0, 20.0).with_eps(0.1);
        let spec = IntegrandSpec::new(params, CoefficientSpec::constant(1.0, 3.0)).unwrap();
        let dom = Domain::unit(2, 1.0, 4, 2).unwrap();
        let r = check_structure(&spec, &dom, 40);
        assert!(r.lower_constant >= 1.0 - 1e-14);
    }

    fn sample_integrand() -> impl Strategy<Value = (Integrand, f64, f64)> {
        (
            2.0f64..3.0,
            0.0f64..0.4,
            0.0f64..1.0,
            prop_oneof![Just(0.0), 0.0f64..1.0],
            0.05f64..5.0,
            0.05f64..5.0,
        )
            .prop_map(|(p, dq, mu, eps, a, b)| {
                let q = p + dq;
                (
                    Integrand {
                        p,
                        q,
                        mu,
                        eps,
                        q_beta: q * 1.05,
                    },
                    a,
                    b,
                )
            })
    }

    proptest! {
        #[test]
        fn flux_is_gradient((f, a, b) in sample_integrand(), x in -3.0f64..3.0, y in -3.0f64..3.0) {
            prop_assume!(x.abs() + y.abs() > 1e-2);
            let xi = [x, y];
            let flux = f.flux(&xi, a, b);
            for axis in 0..2 {
                let h = 1e-5 * (1.0 + xi[axis].abs());
                let mut plus = xi;
                let mut minus = xi;
                plus[axis] += h;
                minus[axis] -= h;
                let fd = (f.value(&plus, a, b) - f.value(&minus, a, b)) / (2.0 * h);
                let scale = flux[axis].abs().max(norm2(&flux).sqrt() * 1e-3).max(1e-8);
                prop_assert!((fd - flux[axis]).abs() / scale <= 1e-6, "fd {} flux {}", fd, flux[axis]);
            }
        }

        #[test]
        fn flux_is_monotone((f, a, b) in sample_integrand(), v in prop::array::uniform4(-3.0f64..3.0)) {
            let (x1, x2) = ([v[0], v[1]], [v[2], v[3]]);
            let (f1, f2) = (f.flux(&x1, a, b), f.flux(&x2, a, b));
            let pairing: f64 = (0..2).map(|i| (f1[i] - f2[i]) * (x1[i] - x2[i])).sum();
            prop_assert!(pairing >= -1e-12 * (1.0 + norm2(&f1) + norm2(&f2)));
        }

        #[test]
        fn flux_is_coercive((f, a, b) in sample_integrand(), x in -3.0f64..3.0, y in -3.0f64..3.0) {
            let xi = [x, y];
            let s2 = norm2(&xi);
            let w = f.mu * f.mu + s2;
            let pairing: f64 = f.flux(&xi, a, b).iter().zip(&xi).map(|(g, x)| g * x).sum();
            let lower = a * pow_or_one(w, 0.5 * (f.p - 2.0)) * s2 + f.eps * s2.powf(0.5 * f.q_beta);
            prop_assert!(pairing - lower >= -1e-14 * (1.0 + pairing.abs()));
        }
    }
}
