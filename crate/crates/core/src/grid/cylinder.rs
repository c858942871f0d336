use serde::{Deserialize, Serialize};

use super::Domain;
use crate::exponents::DerivedExponents;

/// Backward parabolic cylinder `B_rho(x_o) x (t_o - sigma, t_o)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cylinder {
    pub center: Vec<f64>,
    pub t: f64,
    pub rho: f64,
    pub sigma: f64,
    /// `sigma == rho^{p/(p+1-q)}`
    pub intrinsic: bool,
}

const REL_TOL: f64 = 1e-12;

impl Cylinder {
    pub fn new(center: Vec<f64>, t: f64, rho: f64, sigma: f64) -> Self {
        Self {
            center,
            t,
            rho,
            sigma,
            intrinsic: false,
        }
    }

    /// Concentric cylinder with new radii; intrinsic only if the new pair
    /// still satisfies the intrinsic scaling.
    pub fn with_radii(&self, rho: f64, sigma: f64, d: &DerivedExponents) -> Self {
        let intrinsic = (sigma - rho.powf(d.intrinsic)).abs() <= 1e-12 * sigma.max(1.0);
        Self {
            center: self.center.clone(),
            t: self.t,
            rho,
            sigma,
            intrinsic,
        }
    }

    /// `Q_{2 rho, 2 sigma}` around the same center.
    pub fn doubled(&self) -> Self {
        Self {
            center: self.center.clone(),
            t: self.t,
            rho: 2.0 * self.rho,
            sigma: 2.0 * self.sigma,
            intrinsic: false,
        }
    }

    pub fn contains_point(&self, x: &[f64], t: f64, t_scale: f64) -> bool {
        self.contains_space(x) && self.contains_time(t, t_scale)
    }

    pub fn contains_space(&self, x: &[f64]) -> bool {
        let r2: f64 = self
            .center
            .iter()
            .zip(x)
            .map(|(c, xi)| (xi - c).powi(2))
            .sum();
        r2.sqrt() < self.rho * (1.0 - REL_TOL)
    }

    fn contains_time(&self, t: f64, t_scale: f64) -> bool {
        let tol = REL_TOL * t_scale.max(1.0);
        t > self.t - self.sigma + tol && t <= self.t + tol
    }

    /// Spatial node indices inside the open ball.
    pub fn space_nodes(&self, domain: &Domain) -> Vec<usize> {
        (0..domain.n_space())
            .filter(|&s| self.contains_space(&domain.coords(s)[..domain.n]))
            .collect()
    }

    /// Time levels in `(t_o - sigma, t_o]`.
    pub fn time_levels(&self, domain: &Domain) -> Vec<usize> {
        (0..domain.n_time())
            .filter(|&j| self.contains_time(domain.time(j), domain.t_final))
            .collect()
    }

    /// Spatial gap between the closed ball and the lateral boundary, and
    /// the temporal gap `t_o - sigma` to the initial slice.
    pub fn boundary_gaps(&self, domain: &Domain) -> (f64, f64) {
        let space = (0..domain.n)
            .map(|a| {
                (self.center[a] - self.rho - domain.lower[a])
                    .min(domain.upper[a] - self.center[a] - self.rho)
            })
            .fold(f64::INFINITY, f64::min);
        (space, self.t - self.sigma)
    }

    /// Positive parabolic distance to `partial_par Omega_T` and `t_o <= T`.
    pub fn is_interior(&self, domain: &Domain) -> bool {
        let (gs, gt) = self.boundary_gaps(domain);
        self.center.len() == domain.n
            && gs > 0.0
            && gt > 0.0
            && self.t <= domain.t_final * (1.0 + REL_TOL)
    }

    /// p,q-parabolic distance from the cylinder to the parabolic boundary.
    pub fn parabolic_distance(&self, domain: &Domain, d: &DerivedExponents) -> f64 {
        let (gs, gt) = self.boundary_gaps(domain);
        if gs <= 0.0 || gt <= 0.0 {
            return 0.0;
        }
        gs.min(gt.powf(1.0 / d.intrinsic))
    }

    /// Number of nodes the cylinder resolves along each spatial axis (through
    /// the center row) and in time.
    pub fn resolution(&self, domain: &Domain) -> (usize, usize) {
        let h = domain.spacing(0);
        let space = (0..domain.nx)
            .filter(|&i| {
                let x = domain.lower[0] + i as f64 * h;
                (x - self.center[0]).abs() < self.rho * (1.0 - REL_TOL)
            })
            .count();
        (space, self.time_levels(domain).len())
    }
}

/// `|x1 - x2| + |t1 - t2|^{(p+1-q)/p}`.
pub fn pq_distance(x1: &[f64], t1: f64, x2: &[f64], t2: f64, d: &DerivedExponents) -> f64 {
    let dx: f64 = x1
        .iter()
        .zip(x2)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    dx + (t1 - t2).abs().powf(1.0 / d.intrinsic)
}

/// Intrinsic cylinder `Q_rho^{(p,q)}(z_o)` with `sigma = rho^{p/(p+1-q)}`.
pub fn pq_cylinder(center: Vec<f64>, t: f64, rho: f64, d: &DerivedExponents) -> Cylinder {
    Cylinder {
        center,
        t,
        rho,
        sigma: rho.powf(d.intrinsic),
        intrinsic: true,
    }
}
