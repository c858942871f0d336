use serde::{Deserialize, Serialize};

use crate::grid::{Domain, SpaceTimeField};

/// Spatial part `g_0` of a boundary datum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "lowercase", deny_unknown_fields)]
pub enum Profile {
    Zero {},
    Constant {
        value: f64,
    },
    /// `amplitude * prod_a sin(mode pi (x_a - lower_a) / len_a)`
    Sine {
        amplitude: f64,
        mode: u32,
    },
    /// `offset + <slope, x>`
    Affine {
        offset: f64,
        slope: Vec<f64>,
    },
    /// `amplitude * exp(-|x - center|^2 / (2 width^2))`
    Gaussian {
        amplitude: f64,
        center: Vec<f64>,
        width: f64,
    },
}

impl Profile {
    pub fn eval(&self, x: &[f64], domain: &Domain) -> f64 {
        match self {
            Self::Zero {} => 0.0,
            Self::Constant { value } => *value,
            Self::Sine { amplitude, mode } => {
                amplitude * sine_mode(x, domain, &[*mode as usize, *mode as usize])
            }
            Self::Affine { offset, slope } => {
                offset + x.iter().zip(slope).map(|(a, b)| a * b).sum::<f64>()
            }
            Self::Gaussian {
                amplitude,
                center,
                width,
            } => {
                let r2: f64 = x.iter().zip(center).map(|(a, c)| (a - c).powi(2)).sum();
                amplitude * (-r2 / (2.0 * width * width)).exp()
            }
        }
    }

    pub fn validate(&self, n: usize) -> Result<(), String> {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match self {
            Self::Zero {} => Ok(()),
            Self::Constant { value } if value.is_finite() => Ok(()),
            Self::Sine { amplitude, mode } if amplitude.is_finite() && *mode >= 1 => Ok(()),
            Self::Affine { offset, slope }
                if slope.len() == n && finite(slope) && offset.is_finite() =>
            {
                Ok(())
            }
            Self::Gaussian {
                amplitude,
                center,
                width,
            } if center.len() == n && finite(center) && amplitude.is_finite() && *width > 0.0 => {
                Ok(())
            }
            other => Err(format!(
                "invalid boundary profile {other:?} for dimension {n}"
            )),
        }
    }
}

/// `prod_a sin(k_a pi (x_a - lower_a) / len_a)`
pub fn sine_mode(x: &[f64], domain: &Domain, modes: &[usize]) -> f64 {
    (0..domain.n)
        .map(|a| {
            let s = (x[a] - domain.lower[a]) / (domain.upper[a] - domain.lower[a]);
            (modes[a] as f64 * std::f64::consts::PI * s).sin()
        })
        .product()
}

/// Separable datum `g(x,t) = g_0(x) psi(t)` with `psi(t) = sum_k c_k t^k`;
/// an empty polynomial means `psi = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryDatum {
    #[serde(flatten)]
    pub profile: Profile,
    #[serde(default)]
    pub time_poly: Vec<f64>,
}

impl BoundaryDatum {
    pub fn zero() -> Self {
        Self {
            profile: Profile::Zero {},
            time_poly: Vec::new(),
        }
    }

    pub fn steady(profile: Profile) -> Self {
        Self {
            profile,
            time_poly: Vec::new(),
        }
    }

    pub fn psi(&self, t: f64) -> f64 {
        if self.time_poly.is_empty() {
            return 1.0;
        }
        self.time_poly.iter().rev().fold(0.0, |acc, c| acc * t + c)
    }

    pub fn dpsi(&self, t: f64) -> f64 {
        self.time_poly
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (k, c)| acc * t + k as f64 * c)
    }

    pub fn is_time_independent(&self) -> bool {
        matches!(self.profile, Profile::Zero {}) || self.time_poly.iter().skip(1).all(|&c| c == 0.0)
    }

    pub fn eval(&self, x: &[f64], t: f64, domain: &Domain) -> f64 {
        self.profile.eval(x, domain) * self.psi(t)
    }

    pub fn sample(&self, domain: &Domain) -> SpaceTimeField {
        SpaceTimeField::from_fn(domain.clone(), |x, t| self.eval(x, t, domain))
    }

    /// Values of `g(., t)` at every spatial node.
    pub fn slice(&self, domain: &Domain, t: f64) -> Vec<f64> {
        (0..domain.n_space())
            .map(|s| self.eval(&domain.coords(s)[..domain.n], t, domain))
            .collect()
    }

    pub fn validate(&self, n: usize) -> Result<(), String> {
        if self.time_poly.iter().any(|c| !c.is_finite()) {
            return Err("time polynomial coefficients must be finite".into());
        }
        self.profile.validate(n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psi_and_derivative() {
        let g = BoundaryDatum {
            profile: Profile::Constant { value: 2.0 },
            time_poly: vec![1.0, -2.0, 3.0],
        };
        assert_eq!(g.psi(0.5), 1.0 - 1.0 + 0.75);
        assert_eq!(g.dpsi(0.5), -2.0 + 3.0);
        assert!(!g.is_time_independent());
        assert!(BoundaryDatum::steady(Profile::Constant { value: 1.0 }).is_time_independent());
        assert_eq!(BoundaryDatum::zero().dpsi(0.3), 0.0);
    }

    #[test]
    fn profiles() {
        let d = Domain::unit(2, 1.0, 5, 2).unwrap();
        let s = Profile::Sine {
            amplitude: 2.0,
            mode: 1,
        };
        assert!((s.eval(&[0.5, 0.5], &d) - 2.0).abs() < 1e-15);
        assert!(s.eval(&[0.0, 0.5], &d).abs() < 1e-15);
        let a = Profile::Affine {
            offset: 1.0,
            slope: vec![2.0, -1.0],
        };
        assert_eq!(a.eval(&[0.5, 1.0], &d), 1.0);
        assert!(a.validate(1).is_err());
        let g = Profile::Gaussian {
            amplitude: 1.0,
            center: vec![0.5, 0.5],
            width: 0.1,
        };
        assert_eq!(g.eval(&[0.5, 0.5], &d), 1.0);
    }
}
