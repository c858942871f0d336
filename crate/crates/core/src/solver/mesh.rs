//! Piecewise-linear elements on the grid nodes: intervals in 1D, and in 2D
//! every cell split along its `(i,j)-(i+1,j+1)` diagonal.
//!
//! The discrete gradient `D_h` maps nodal values to one constant vector per
//! element. The discrete divergence is its negative adjoint with respect to
//! the lumped mass and the element areas, so
//! `sum_s m_s div_h(F)_s phi_s = -sum_e |e| <F_e, D_h phi_e>`
//! holds to roundoff whenever `phi` vanishes on boundary nodes.

use crate::grid::Domain;
use crate::model::{CoefficientSpec, Integrand};

#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    pub nodes: [usize; 3],
    /// Gradient contribution of each vertex.
    pub coef: [[f64; 2]; 3],
    pub vertices: usize,
    pub area: f64,
    pub centroid: [f64; 2],
}

impl Element {
    pub fn gradient(&self, u: &[f64]) -> [f64; 2] {
        let mut g = [0.0; 2];
        for k in 0..self.vertices {
            let v = u[self.nodes[k]];
            g[0] += self.coef[k][0] * v;
            g[1] += self.coef[k][1] * v;
        }
        g
    }
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub domain: Domain,
    pub elements: Vec<Element>,
    /// Lumped mass per spatial node.
    pub mass: Vec<f64>,
    /// `a` and `b` at element centroids.
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub boundary: Vec<bool>,
}

impl Mesh {
    pub fn new(domain: &Domain, coefficients: &CoefficientSpec) -> Self {
        let elements = build_elements(domain);
        let mut mass = vec![0.0; domain.n_space()];
        for e in &elements {
            let share = e.area / e.vertices as f64;
            for k in 0..e.vertices {
                mass[e.nodes[k]] += share;
            }
        }
        let n = domain.n;
        let a = elements
            .iter()
            .map(|e| coefficients.a.eval(&e.centroid[..n], 0.0))
            .collect();
        let b = elements
            .iter()
            .map(|e| coefficients.b.eval(&e.centroid[..n], 0.0))
            .collect();
        let boundary = (0..domain.n_space())
            .map(|s| domain.is_boundary(s))
            .collect();
        Self {
            domain: domain.clone(),
            elements,
            mass,
            a,
            b,
            boundary,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.mass.len()
    }

    pub fn gradients(&self, u: &[f64]) -> Vec<[f64; 2]> {
        self.elements.iter().map(|e| e.gradient(u)).collect()
    }

    /// `div_h` of an element-wise vector field, at every node.
    pub fn divergence(&self, flux: &[[f64; 2]]) -> Vec<f64> {
        let mut out = self.weak_divergence(flux);
        for (o, m) in out.iter_mut().zip(&self.mass) {
            *o = -*o / m;
        }
        out
    }

    /// `sum_e |e| <F_e, c_{e,s}>` at every node `s`.
    pub fn weak_divergence(&self, flux: &[[f64; 2]]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_nodes()];
        for (e, f) in self.elements.iter().zip(flux) {
            for k in 0..e.vertices {
                out[e.nodes[k]] += e.area * (e.coef[k][0] * f[0] + e.coef[k][1] * f[1]);
            }
        }
        out
    }

    /// Element fluxes of `f` at the nodal field `u`.
    pub fn fluxes(&self, u: &[f64], f: &Integrand) -> Vec<[f64; 2]> {
        self.elements
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let g = e.gradient(u);
                let k = f.diffusivity(g[0] * g[0] + g[1] * g[1], self.a[i], self.b[i]);
                [k * g[0], k * g[1]]
            })
            .collect()
    }

    /// `sum_e |e| f(x_e, D_h u)`.
    pub fn energy(&self, u: &[f64], f: &Integrand) -> f64 {
        self.elements
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let g = e.gradient(u);
                e.area * f.value_norm2(g[0] * g[0] + g[1] * g[1], self.a[i], self.b[i])
            })
            .sum()
    }

    /// `sum_e |e| |D_h u|^r`.
    pub fn gradient_power(&self, u: &[f64], r: f64) -> f64 {
        self.elements
            .iter()
            .map(|e| {
                let g = e.gradient(u);
                e.area * (g[0] * g[0] + g[1] * g[1]).sqrt().powf(r)
            })
            .sum()
    }

    /// `sum_s m_s |u_s|^r`.
    pub fn mass_power(&self, u: &[f64], r: f64) -> f64 {
        self.mass
            .iter()
            .zip(u)
            .map(|(m, v)| m * v.abs().powf(r))
            .sum()
    }

    pub fn mass_dot(&self, u: &[f64], v: &[f64]) -> f64 {
        self.mass
            .iter()
            .zip(u)
            .zip(v)
            .map(|((m, a), b)| m * a * b)
            .sum()
    }
}

fn build_elements(d: &Domain) -> Vec<Element> {
    let hx = d.spacing(0);
    let x = |i: usize| d.lower[0] + i as f64 * hx;
    if d.n == 1 {
        return (0..d.nx - 1)
            .map(|i| Element {
                nodes: [i, i + 1, 0],
                coef: [[-1.0 / hx, 0.0], [1.0 / hx, 0.0], [0.0; 2]],
                vertices: 2,
                area: hx,
                centroid: [x(i) + 0.5 * hx, 0.0],
            })
            .collect();
    }
    let hy = d.spacing(1);
    let y = |j: usize| d.lower[1] + j as f64 * hy;
    let area = 0.5 * hx * hy;
    let mut out = Vec::with_capacity(2 * (d.nx - 1) * (d.nx - 1));
    for j in 0..d.nx - 1 {
        for i in 0..d.nx - 1 {
            let n00 = d.space_index([i, j]);
            let n10 = d.space_index([i + 1, j]);
            let n11 = d.space_index([i + 1, j + 1]);
            let n01 = d.space_index([i, j + 1]);
            // lower triangle: x-slope along the bottom edge, y-slope along the right edge
            out.push(Element {
                nodes: [n00, n10, n11],
                coef: [[-1.0 / hx, 0.0], [1.0 / hx, -1.0 / hy], [0.0, 1.0 / hy]],
                vertices: 3,
                area,
                centroid: [x(i) + 2.0 * hx / 3.0, y(j) + hy / 3.0],
            });
            // upper triangle: x-slope along the top edge, y-slope along the left edge
            out.push(Element {
                nodes: [n00, n11, n01],
                coef: [[0.0, -1.0 / hy], [1.0 / hx, 0.0], [-1.0 / hx, 1.0 / hy]],
                vertices: 3,
                area,
                centroid: [x(i) + hx / 3.0, y(j) + 2.0 * hy / 3.0],
            });
        }
    }
    out
}
