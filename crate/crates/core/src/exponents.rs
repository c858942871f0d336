//! Structure parameters of the p,q-growth problem and every closed-form
//! exponent derived from them.
//!
//! The integrability exponents `alpha` (of `1/a`) and `beta` (of `b`) may be
//! `f64::INFINITY`; all formulas then use the limiting factors
//! `alpha/(alpha+1) -> 1`, `(beta-1)/beta -> 1` and `beta/(beta-1) -> 1`.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Violations of the raw parameter domain.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("spatial dimension must be at least 1, got {0}")]
    Dimension(usize),
    #[error("parameter `{name}` must be finite, got {value}")]
    NonFinite { name: &'static str, value: f64 },
    #[error("p must satisfy p >= 2, got p = {0}")]
    PBelowTwo(f64),
    #[error("q must satisfy q >= p, got p = {p}, q = {q}")]
    QBelowP { p: f64, q: f64 },
    #[error("alpha must satisfy alpha > 1 (or be infinite), got {0}")]
    AlphaNotAboveOne(f64),
    #[error("beta must satisfy beta > 1 (or be infinite), got {0}")]
    BetaNotAboveOne(f64),
    #[error("mu must lie in [0, 1], got {0}")]
    MuOutOfRange(f64),
    #[error("eps must lie in [0, 1], got {0}")]
    EpsOutOfRange(f64),
    #[error("gap condition fails: q = {q} is not below {rhs} (margin {margin})")]
    GapViolated { q: f64, rhs: f64, margin: f64 },
}

/// Raw exponents and parameters of the problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StructureParams {
    pub n: usize,
    pub p: f64,
    pub q: f64,
    pub alpha: f64,
    pub beta: f64,
    pub mu: f64,
    pub eps: f64,
}

impl StructureParams {
    pub fn new(n: usize, p: f64, q: f64, alpha: f64, beta: f64) -> Self {
        Self {
            n,
            p,
            q,
            alpha,
            beta,
            mu: 0.0,
            eps: 0.0,
        }
    }

    pub fn with_mu(mut self, mu: f64) -> Self {
        self.mu = mu;
        self
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps = eps;
        self
    }

    /// Checks the ordering and positivity bounds. The gap condition is
    /// decided separately by [`check_gap`].
    pub fn validate_raw(&self) -> Result<(), ParamError> {
        if self.n == 0 {
            return Err(ParamError::Dimension(self.n));
        }
        for (name, value) in [
            ("p", self.p),
            ("q", self.q),
            ("mu", self.mu),
            ("eps", self.eps),
        ] {
            if !value.is_finite() {
                return Err(ParamError::NonFinite { name, value });
            }
        }
        for (name, value) in [("alpha", self.alpha), ("beta", self.beta)] {
            if value.is_nan() || value == f64::NEG_INFINITY {
                return Err(ParamError::NonFinite { name, value });
            }
        }
        if self.p < 2.0 {
            return Err(ParamError::PBelowTwo(self.p));
        }
        if self.q < self.p {
            return Err(ParamError::QBelowP {
                p: self.p,
                q: self.q,
            });
        }
        if self.alpha <= 1.0 {
            return Err(ParamError::AlphaNotAboveOne(self.alpha));
        }
        if self.beta <= 1.0 {
            return Err(ParamError::BetaNotAboveOne(self.beta));
        }
        if !(0.0..=1.0).contains(&self.mu) {
            return Err(ParamError::MuOutOfRange(self.mu));
        }
        if !(0.0..=1.0).contains(&self.eps) {
            return Err(ParamError::EpsOutOfRange(self.eps));
        }
        Ok(())
    }

    /// `alpha/(alpha+1)`, or 1 for infinite alpha.
    pub fn alpha_factor(&self) -> f64 {
        if self.alpha.is_infinite() {
            1.0
        } else {
            self.alpha / (self.alpha + 1.0)
        }
    }

    /// `(beta-1)/beta`, or 1 for infinite beta.
    pub fn beta_factor(&self) -> f64 {
        if self.beta.is_infinite() {
            1.0
        } else {
            (self.beta - 1.0) / self.beta
        }
    }

    /// Hölder conjugate `beta' = beta/(beta-1)`, or 1 for infinite beta.
    pub fn beta_conj(&self) -> f64 {
        if self.beta.is_infinite() {
            1.0
        } else {
            self.beta / (self.beta - 1.0)
        }
    }

    pub fn q_equals_p(&self) -> bool {
        self.q == self.p
    }
}

/// Outcome of the gap test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    /// Whether `q < p * alpha/(alpha+1) * (beta-1)/beta + 2/(n+2)` holds strictly.
    pub holds: bool,
    /// Right-hand side of the gap inequality.
    pub rhs: f64,
    /// `rhs - q`.
    pub margin: f64,
    /// `alpha/(alpha+1) * (beta-1)/beta > 1 - 2/(p(n+2))`.
    pub implied_restriction: bool,
    /// The weaker `alpha/(alpha+1) * (beta-1)/beta >= 1 - 1/(n+2)`; reported only.
    pub weak_restriction: bool,
}

fn rational(x: f64) -> BigRational {
    // every finite f64 is a dyadic rational
    BigRational::from_float(x).expect("finite value")
}

fn ratio_factor(x: f64, shift_num: i64, shift_den: i64) -> BigRational {
    // (x + shift_num) / (x + shift_den), with value 1 at infinity
    if x.is_infinite() {
        return BigRational::one();
    }
    let r = rational(x);
    let num = &r + BigRational::from_integer(BigInt::from(shift_num));
    let den = &r + BigRational::from_integer(BigInt::from(shift_den));
    num / den
}

/// Decides the gap condition in exact rational arithmetic on the binary
/// values of the inputs.
pub fn check_gap(params: &StructureParams) -> Result<GapReport, ParamError> {
    params.validate_raw()?;
    let n2 = BigRational::from_integer(BigInt::from(params.n as u64 + 2));
    let two = BigRational::from_integer(BigInt::from(2));
    let af = ratio_factor(params.alpha, 0, 1);
    let bf = ratio_factor(params.beta, -1, 0);
    let p = rational(params.p);
    let q = rational(params.q);
    let coeff = &af * &bf;
    let rhs = &p * &coeff + &two / &n2;
    let holds = q < rhs;
    let restriction = BigRational::one() - &two / (&p * &n2);
    let implied_restriction = coeff > restriction;
    let weak_restriction = coeff >= BigRational::one() - BigRational::one() / &n2;

    let rhs_f =
        params.p * params.alpha_factor() * params.beta_factor() + 2.0 / (params.n as f64 + 2.0);
    let margin = if (&rhs - &q).is_zero() {
        0.0
    } else {
        rhs_f - params.q
    };
    Ok(GapReport {
        holds,
        rhs: rhs_f,
        margin,
        implied_restriction,
        weak_restriction,
    })
}

/// All exponents computed from a gap-satisfying [`StructureParams`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedExponents {
    pub p_alpha: f64,
    pub q_beta: f64,
    pub beta_conj: f64,
    pub gamma: f64,
    pub m: f64,
    pub kappa: f64,
    pub theta1: f64,
    pub theta2: f64,
    pub theta3: f64,
    pub p_conj: f64,
    pub p_alpha_conj: f64,
    pub q_beta_conj: f64,
    /// Intrinsic time-scaling exponent `p/(p+1-q)`.
    pub intrinsic: f64,
    /// Set when `q == p`; terms with `1/(q-p)` are inactive downstream.
    pub q_equals_p: bool,
}

fn conjugate(r: f64) -> f64 {
    if r == 1.0 {
        f64::INFINITY
    } else {
        r / (r - 1.0)
    }
}

/// Computes every derived exponent. Fails if the raw bounds or the gap
/// condition do not hold.
pub fn derive(params: &StructureParams) -> Result<DerivedExponents, ParamError> {
    let gap = check_gap(params)?;
    if !gap.holds {
        return Err(ParamError::GapViolated {
            q: params.q,
            rhs: gap.rhs,
            margin: gap.margin,
        });
    }
    let n = params.n as f64;
    let (p, q) = (params.p, params.q);
    let af = params.alpha_factor();
    let bf = params.beta_factor();

    let p_alpha = p * af;
    let beta_conj = params.beta_conj();
    let q_beta = q * beta_conj;
    let gamma = p_alpha / (bf * p_alpha - (q - 1.0));
    let m = p_alpha * (n + 2.0) / n;
    let intrinsic = p / (p + 1.0 - q);
    let kappa = intrinsic * ((n + p) / n) * af / gamma - 1.0;
    let denom = (m - gamma) * (1.0 + kappa);

    Ok(DerivedExponents {
        p_alpha,
        q_beta,
        beta_conj,
        gamma,
        m,
        kappa,
        theta1: p_alpha / (n * denom),
        theta2: p_alpha / ((p + 1.0 - q) * denom),
        theta3: kappa / denom,
        p_conj: conjugate(p),
        p_alpha_conj: conjugate(p_alpha),
        q_beta_conj: conjugate(q_beta),
        intrinsic,
        q_equals_p: params.q_equals_p(),
    })
}

/// Values along the exponent chain
/// `gamma >= gamma/beta' >= p_a/(p_a+1-q) >= p/(p+1-q) >= q >= 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentChain {
    pub gamma: f64,
    pub gamma_over_beta_conj: f64,
    pub p_alpha_ratio: f64,
    pub p_ratio: f64,
    pub q: f64,
}

impl ExponentChain {
    pub fn new(params: &StructureParams, d: &DerivedExponents) -> Self {
        Self {
            gamma: d.gamma,
            gamma_over_beta_conj: d.gamma / d.beta_conj,
            p_alpha_ratio: d.p_alpha / (d.p_alpha + 1.0 - params.q),
            p_ratio: d.intrinsic,
            q: params.q,
        }
    }

    pub fn as_array(&self) -> [f64; 6] {
        [
            self.gamma,
            self.gamma_over_beta_conj,
            self.p_alpha_ratio,
            self.p_ratio,
            self.q,
            2.0,
        ]
    }

    /// Whether each link holds up to `tol` (relative to the larger side).
    pub fn holds(&self, tol: f64) -> bool {
        self.as_array()
            .windows(2)
            .all(|w| w[0] >= w[1] - tol * w[0].abs().max(w[1].abs()).max(1.0))
    }
}

/// Largest `eps` for which the sup-bound machinery applies at level `k` on
/// radius `rho`: `(A^{(q-1)/p} B)^{p/(p+1-q)} (k/rho)^{p/(p+1-q) - q_beta}`.
pub fn epsilon_threshold(
    k: f64,
    rho: f64,
    norm_a: f64,
    norm_b: f64,
    d: &DerivedExponents,
    params: &StructureParams,
) -> f64 {
    let (p, q) = (params.p, params.q);
    let base = norm_a.powf((q - 1.0) / p) * norm_b;
    base.powf(d.intrinsic) * (k / rho).powf(d.intrinsic - d.q_beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn reference() -> StructureParams {
        StructureParams::new(2, 2.0, 2.1, 20.0, 20.0)
    }

    #[test]
    fn gap_reference_tuple() {
        let g = check_gap(&reference()).unwrap();
        assert!(g.holds);
        assert_relative_eq!(g.margin, 38.0 / 21.0 + 0.5 - 2.1, epsilon = 1e-14);
        assert_relative_eq!(g.margin, 22.0 / 105.0, epsilon = 1e-14);
        assert!(g.implied_restriction);
    }

    #[test]
    fn gap_infinite_exponents() {
        let inf = f64::INFINITY;
        let g = check_gap(&StructureParams::new(2, 2.0, 2.0, inf, inf)).unwrap();
        assert!(g.holds);
        assert_eq!(g.margin, 0.5);
        let g = check_gap(&StructureParams::new(2, 2.0, 2.5, inf, inf)).unwrap();
        assert!(!g.holds);
        assert_eq!(g.margin, 0.0);
    }

    #[test]
    fn raw_parameter_errors() {
        let base = reference();
        let cases = [
            (StructureParams { p: 1.5, ..base }, "p >= 2"),
            (StructureParams { q: 1.9, ..base }, "q >= p"),
            (StructureParams { alpha: 1.0, ..base }, "alpha > 1"),
            (StructureParams { beta: 0.5, ..base }, "beta > 1"),
            (StructureParams { mu: 1.5, ..base }, "mu must lie"),
            (StructureParams { eps: -0.1, ..base }, "eps must lie"),
        ];
        for (params, needle) in cases {
            let err = check_gap(&params).unwrap_err();
            assert!(
                err.to_string().contains(needle),
                "{err} should mention {needle}"
            );
        }
    }

    #[test]
    fn derive_reference_values() {
        let d = derive(&reference()).unwrap();
        assert_relative_eq!(d.p_alpha, 40.0 / 21.0, epsilon = 1e-14);
        assert_relative_eq!(d.q_beta, 42.0 / 19.0, epsilon = 1e-14);
        assert_relative_eq!(d.beta_conj, 20.0 / 19.0, epsilon = 1e-14);
        assert_relative_eq!(d.gamma, 400.0 / 149.0, epsilon = 1e-13);
        assert_relative_eq!(d.m, 80.0 / 21.0, epsilon = 1e-14);
        assert_relative_eq!(d.kappa, 109.0 / 189.0, epsilon = 1e-13);
        // exact rationals from an independent fraction computation
        assert_relative_eq!(d.theta1, 189.0 / 352.0, epsilon = 1e-12);
        assert_relative_eq!(d.theta2, 105.0 / 88.0, epsilon = 1e-12);
        assert_relative_eq!(d.theta3, 2289.0 / 7040.0, epsilon = 1e-12);
        assert!(!d.q_equals_p);
    }

    #[test]
    fn derive_rejects_gap_failure() {
        let inf = f64::INFINITY;
        let err = derive(&StructureParams::new(2, 2.0, 2.5, inf, inf)).unwrap_err();
        assert!(matches!(err, ParamError::GapViolated { .. }));
    }

    #[test]
    fn equal_exponents_collapse_chain_tail() {
        let params = StructureParams::new(3, 2.0, 2.0, 50.0, 50.0);
        let d = derive(&params).unwrap();
        assert!(d.q_equals_p);
        assert_eq!(d.intrinsic, 2.0);
        let chain = ExponentChain::new(&params, &d);
        assert!(chain.holds(1e-12));
        assert_eq!(chain.p_ratio, chain.q);
    }

    #[test]
    fn infinite_limits() {
        let inf = f64::INFINITY;
        let params = StructureParams::new(2, 2.0, 2.2, inf, inf);
        let d = derive(&params).unwrap();
        assert_eq!(d.p_alpha, 2.0);
        assert_eq!(d.q_beta, 2.2);
        assert_eq!(d.beta_conj, 1.0);
        assert_relative_eq!(d.gamma, 2.0 / 0.8, epsilon = 1e-14);
        assert_relative_eq!(d.q_beta_conj, 2.2 / 1.2, epsilon = 1e-14);
    }

    #[test]
    fn threshold_examples() {
        let params = reference();
        let d = derive(&params).unwrap();
        assert_relative_eq!(d.intrinsic - d.q_beta, 2.0 / 171.0, epsilon = 1e-13);
        assert_relative_eq!(epsilon_threshold(1.0, 1.0, 1.0, 1.0, &d, &params), 1.0);

        let inf = f64::INFINITY;
        let params = StructureParams::new(2, 2.0, 2.0, 5.0, inf);
        let d = derive(&params).unwrap();
        assert_eq!(d.intrinsic - d.q_beta, 0.0);
        let (a, b) = (2.0_f64, 3.0_f64);
        assert_relative_eq!(
            epsilon_threshold(0.7, 0.3, a, b, &d, &params),
            (a.sqrt() * b).powi(2),
            max_relative = 1e-14
        );
    }
}
