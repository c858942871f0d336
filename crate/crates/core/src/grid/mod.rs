//! Uniform space-time grids over `Omega x (0, T)` with `Omega` a box in one
//! or two space dimensions, plus the discrete measure theory the estimates
//! are evaluated with: regions, quadrature, norms, truncations and sups.

mod cylinder;
pub mod io;

pub use cylinder::{pq_cylinder, pq_distance, Cylinder};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("region contains no grid nodes")]
    EmptyRegion,
    #[error("field shape does not match domain: expected {expected} values, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("field contains a non-finite value at index {0}")]
    NonFinite(usize),
    #[error("quadrature exponent must be finite and >= 1, got {0}")]
    BadExponent(f64),
    #[error("malformed field data: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Uniform tensor grid on a box times `[0, T]`.
///
/// Time levels are `t_j = j * dt` for `j = 0..=nt`; every spatial axis
/// carries `nx` nodes including both endpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub n: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub t_final: f64,
    pub nx: usize,
    pub nt: usize,
}

impl Domain {
    pub fn new(
        lower: Vec<f64>,
        upper: Vec<f64>,
        t_final: f64,
        nx: usize,
        nt: usize,
    ) -> Result<Self, GridError> {
        let n = lower.len();
        if !(1..=2).contains(&n) || upper.len() != n {
            return Err(GridError::InvalidDomain(format!(
                "fields support 1 or 2 space dimensions with matching bounds, got {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        if lower
            .iter()
            .zip(&upper)
            .any(|(l, u)| !(l.is_finite() && u.is_finite() && u > l))
        {
            return Err(GridError::InvalidDomain(
                "every axis needs finite lower < upper".into(),
            ));
        }
        if !(t_final.is_finite() && t_final > 0.0) {
            return Err(GridError::InvalidDomain(format!(
                "final time must be positive, got {t_final}"
            )));
        }
        if nx < 3 {
            return Err(GridError::InvalidDomain(format!(
                "need at least 3 nodes per axis, got {nx}"
            )));
        }
        if nt < 2 {
            return Err(GridError::InvalidDomain(format!(
                "need at least 2 time steps, got {nt}"
            )));
        }
        Ok(Self {
            n,
            lower,
            upper,
            t_final,
            nx,
            nt,
        })
    }

    /// The unit interval or unit square.
    pub fn unit(n: usize, t_final: f64, nx: usize, nt: usize) -> Result<Self, GridError> {
        Self::new(vec![0.0; n], vec![1.0; n], t_final, nx, nt)
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        (self.upper[axis] - self.lower[axis]) / (self.nx - 1) as f64
    }

    pub fn dt(&self) -> f64 {
        self.t_final / self.nt as f64
    }

    pub fn n_space(&self) -> usize {
        self.nx.pow(self.n as u32)
    }

    pub fn n_time(&self) -> usize {
        self.nt + 1
    }

    pub fn len(&self) -> usize {
        self.n_space() * self.n_time()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.n).map(|a| self.spacing(a)).product()
    }

    pub fn volume(&self) -> f64 {
        (0..self.n).map(|a| self.upper[a] - self.lower[a]).product()
    }

    pub fn time(&self, j: usize) -> f64 {
        if j == self.nt {
            self.t_final
        } else {
            j as f64 * self.dt()
        }
    }

    /// Per-axis node indices of spatial node `s` (x index first).
    pub fn axis_indices(&self, s: usize) -> [usize; 2] {
        if self.n == 1 {
            [s, 0]
        } else {
            [s % self.nx, s / self.nx]
        }
    }

    pub fn space_index(&self, idx: [usize; 2]) -> usize {
        if self.n == 1 {
            idx[0]
        } else {
            idx[1] * self.nx + idx[0]
        }
    }

    /// Coordinates of spatial node `s`; unused trailing entries are zero.
    pub fn coords(&self, s: usize) -> [f64; 2] {
        let idx = self.axis_indices(s);
        let mut x = [0.0; 2];
        for (a, xa) in x.iter_mut().enumerate().take(self.n) {
            *xa = if idx[a] == self.nx - 1 {
                self.upper[a]
            } else {
                self.lower[a] + idx[a] as f64 * self.spacing(a)
            };
        }
        x
    }

    pub fn is_boundary(&self, s: usize) -> bool {
        let idx = self.axis_indices(s);
        idx[..self.n].iter().any(|&i| i == 0 || i == self.nx - 1)
    }

    pub fn index(&self, j: usize, s: usize) -> usize {
        j * self.n_space() + s
    }

    /// Trapezoid weight of spatial node `s` over the whole box.
    pub fn trapezoid_space_weight(&self, s: usize) -> f64 {
        let idx = self.axis_indices(s);
        (0..self.n)
            .map(|a| {
                let h = self.spacing(a);
                if idx[a] == 0 || idx[a] == self.nx - 1 {
                    0.5 * h
                } else {
                    h
                }
            })
            .product()
    }

    /// Selects nodes and quadrature weights for `region`.
    pub fn select(&self, region: &Region) -> Result<Selection, GridError> {
        let dt = self.dt();
        let trapezoid_time = |last: usize| -> Vec<(usize, f64)> {
            (0..=last)
                .map(|j| (j, if j == 0 || j == last { 0.5 * dt } else { dt }))
                .collect()
        };
        let sel = match region {
            Region::Whole => Selection {
                space: (0..self.n_space())
                    .map(|s| (s, self.trapezoid_space_weight(s)))
                    .collect(),
                time: trapezoid_time(self.nt),
            },
            Region::UpTo(last) => {
                let last = (*last).min(self.nt);
                if last == 0 {
                    return Err(GridError::EmptyRegion);
                }
                Selection {
                    space: (0..self.n_space())
                        .map(|s| (s, self.trapezoid_space_weight(s)))
                        .collect(),
                    time: trapezoid_time(last),
                }
            }
            Region::Cylinder(cyl) => {
                let vol = self.cell_volume();
                Selection {
                    space: cyl
                        .space_nodes(self)
                        .into_iter()
                        .map(|s| (s, vol))
                        .collect(),
                    time: cyl.time_levels(self).into_iter().map(|j| (j, dt)).collect(),
                }
            }
        };
        if sel.space.is_empty() || sel.time.is_empty() {
            return Err(GridError::EmptyRegion);
        }
        Ok(sel)
    }
}

/// A set of space-time nodes over which integrals are taken.
#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    /// All of `Omega_T`, trapezoid weights in every direction.
    Whole,
    /// `Omega x (0, t_last)`, trapezoid weights.
    UpTo(usize),
    /// Nodes of a backward cylinder, each weighted by the cell volume.
    Cylinder(Cylinder),
}

/// Tensor-product node selection with quadrature weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub space: Vec<(usize, f64)>,
    pub time: Vec<(usize, f64)>,
}

impl Selection {
    pub fn space_measure(&self) -> f64 {
        self.space.iter().map(|(_, w)| w).sum()
    }

    pub fn time_measure(&self) -> f64 {
        self.time.iter().map(|(_, w)| w).sum()
    }

    pub fn measure(&self) -> f64 {
        self.space_measure() * self.time_measure()
    }

    /// Weighted sum of `g(value)` in a fixed order.
    pub fn integrate(&self, field: &SpaceTimeField, g: impl Fn(f64) -> f64) -> f64 {
        self.integrate_nodes(field.domain(), |idx| g(field.values[idx]))
    }

    /// Weighted sum of `g(flat_index)` in a fixed order.
    pub fn integrate_nodes(&self, domain: &Domain, g: impl Fn(usize) -> f64) -> f64 {
        let mut total = 0.0;
        for &(j, wt) in &self.time {
            let mut slice = 0.0;
            for &(s, ws) in &self.space {
                slice += ws * g(domain.index(j, s));
            }
            total += wt * slice;
        }
        total
    }
}

/// A scalar sampled at every node of a [`Domain`].
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeField {
    domain: Domain,
    values: Vec<f64>,
}

impl SpaceTimeField {
    pub fn new(domain: Domain, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != domain.len() {
            return Err(GridError::ShapeMismatch {
                expected: domain.len(),
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(GridError::NonFinite(i));
        }
        Ok(Self { domain, values })
    }

    pub fn zeros(domain: Domain) -> Self {
        let len = domain.len();
        Self {
            domain,
            values: vec![0.0; len],
        }
    }

    pub fn constant(domain: Domain, c: f64) -> Self {
        let len = domain.len();
        Self {
            domain,
            values: vec![c; len],
        }
    }

    /// Samples `f(x, t)` where `x` has one entry per space dimension.
    pub fn from_fn(domain: Domain, f: impl Fn(&[f64], f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(domain.len());
        for j in 0..domain.n_time() {
            let t = domain.time(j);
            for s in 0..domain.n_space() {
                let x = domain.coords(s);
                values.push(f(&x[..domain.n], t));
            }
        }
        Self { domain, values }
    }

    pub(crate) fn from_parts_unchecked(domain: Domain, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), domain.len());
        Self { domain, values }
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn at(&self, j: usize, s: usize) -> f64 {
        self.values[self.domain.index(j, s)]
    }

    pub fn slice(&self, j: usize) -> &[f64] {
        let ns = self.domain.n_space();
        &self.values[j * ns..(j + 1) * ns]
    }

    pub fn slice_mut(&mut self, j: usize) -> &mut [f64] {
        let ns = self.domain.n_space();
        &mut self.values[j * ns..(j + 1) * ns]
    }

    pub fn map(&self, g: impl Fn(f64) -> f64) -> Self {
        Self {
            domain: self.domain.clone(),
            values: self.values.iter().map(|&v| g(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, g: impl Fn(f64, f64) -> f64) -> Result<Self, GridError> {
        if other.domain != self.domain {
            return Err(GridError::ShapeMismatch {
                expected: self.values.len(),
                got: other.values.len(),
            });
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| g(a, b))
            .collect();
        Ok(Self {
            domain: self.domain.clone(),
            values,
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

fn check_exponent(r: f64) -> Result<(), GridError> {
    if r.is_finite() && r >= 1.0 {
        Ok(())
    } else {
        Err(GridError::BadExponent(r))
    }
}

/// `int_region |f|^r` by the region's quadrature.
pub fn integral_pow(f: &SpaceTimeField, r: f64, region: &Region) -> Result<f64, GridError> {
    check_exponent(r)?;
    let sel = f.domain.select(region)?;
    Ok(sel.integrate(f, |v| v.abs().powf(r)))
}

/// `(int_region |f|^r)^(1/r)`.
pub fn lp_norm(f: &SpaceTimeField, r: f64, region: &Region) -> Result<f64, GridError> {
    Ok(integral_pow(f, r, region)?.powf(1.0 / r))
}

/// Mean of `|f|^r` over the region, without a root.
pub fn mean_integral(f: &SpaceTimeField, r: f64, region: &Region) -> Result<f64, GridError> {
    check_exponent(r)?;
    let sel = f.domain.select(region)?;
    Ok(sel.integrate(f, |v| v.abs().powf(r)) / sel.measure())
}

/// Pointwise `max(f - k, 0)`.
pub fn truncate_plus(f: &SpaceTimeField, k: f64) -> SpaceTimeField {
    f.map(|v| (v - k).max(0.0))
}

/// Node maximum over the region.
pub fn ess_sup(f: &SpaceTimeField, region: &Region) -> Result<f64, GridError> {
    let sel = f.domain.select(region)?;
    let mut best = f64::NEG_INFINITY;
    for &(j, _) in &sel.time {
        for &(s, _) in &sel.space {
            best = best.max(f.at(j, s));
        }
    }
    Ok(best)
}

/// `sup_t int_{B_rho} f(x,t)^2 dx` over the time levels of the cylinder.
pub fn slice_sup_l2(f: &SpaceTimeField, cyl: &Cylinder) -> Result<f64, GridError> {
    let sel = f.domain.select(&Region::Cylinder(cyl.clone()))?;
    let mut best: f64 = 0.0;
    for &(j, _) in &sel.time {
        let slice: f64 = sel.space.iter().map(|&(s, w)| w * f.at(j, s).powi(2)).sum();
        best = best.max(slice);
    }
    Ok(best)
}

/// Nodal spatial gradient, one component vector per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    pub components: Vec<Vec<f64>>,
}

impl GradientField {
    pub fn magnitude(&self, idx: usize) -> f64 {
        self.components
            .iter()
            .map(|c| c[idx] * c[idx])
            .sum::<f64>()
            .sqrt()
    }

    pub fn magnitude_field(&self, domain: &Domain) -> SpaceTimeField {
        let values = (0..domain.len()).map(|i| self.magnitude(i)).collect();
        SpaceTimeField::from_parts_unchecked(domain.clone(), values)
    }
}

/// Second-order central differences at interior nodes and second-order
/// one-sided differences on the boundary, per time level.
pub fn gradient(f: &SpaceTimeField) -> GradientField {
    let d = &f.domain;
    let mut components = vec![vec![0.0; d.len()]; d.n];
    for (axis, comp) in components.iter_mut().enumerate() {
        let h = d.spacing(axis);
        let stride = if axis == 0 { 1 } else { d.nx };
        for j in 0..d.n_time() {
            let base = j * d.n_space();
            for s in 0..d.n_space() {
                let i = d.axis_indices(s)[axis];
                let v = |offset: isize| {
                    f.values[(base as isize + s as isize + offset * stride as isize) as usize]
                };
                comp[base + s] = if i == 0 {
                    (-3.0 * v(0) + 4.0 * v(1) - v(2)) / (2.0 * h)
                } else if i == d.nx - 1 {
                    (3.0 * v(0) - 4.0 * v(-1) + v(-2)) / (2.0 * h)
                } else {
                    (v(1) - v(-1)) / (2.0 * h)
                };
            }
        }
    }
    GradientField { components }
}

/// Bold-face coefficient norms: mean-integral forms and raw Lebesgue norms
/// of `1/a` in `L^alpha` and `b` in `L^beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoefficientNorms {
    /// `(mean a^{-alpha})^{1/alpha}`
    pub norm_a: f64,
    /// `(mean b^beta)^{1/beta}`
    pub norm_b: f64,
    /// `||1/a||_{L^alpha}`
    pub raw_a: f64,
    /// `||b||_{L^beta}`
    pub raw_b: f64,
    pub measure: f64,
}

impl CoefficientNorms {
    pub fn compute(
        a: &SpaceTimeField,
        b: &SpaceTimeField,
        alpha: f64,
        beta: f64,
        region: &Region,
    ) -> Result<Self, GridError> {
        let sel = a.domain.select(region)?;
        let measure = sel.measure();
        let inv_a = a.map(|v| 1.0 / v);
        let (norm_a, raw_a) = Self::norm_pair(&sel, &inv_a, alpha, measure);
        let (norm_b, raw_b) = Self::norm_pair(&sel, b, beta, measure);
        Ok(Self {
            norm_a,
            norm_b,
            raw_a,
            raw_b,
            measure,
        })
    }

    fn norm_pair(sel: &Selection, f: &SpaceTimeField, r: f64, measure: f64) -> (f64, f64) {
        if r.is_infinite() {
            let mut sup: f64 = 0.0;
            for &(j, _) in &sel.time {
                for &(s, _) in &sel.space {
                    sup = sup.max(f.at(j, s).abs());
                }
            }
            return (sup, sup);
        }
        let integral = sel.integrate(f, |v| v.abs().powf(r));
        ((integral / measure).powf(1.0 / r), integral.powf(1.0 / r))
    }
}
