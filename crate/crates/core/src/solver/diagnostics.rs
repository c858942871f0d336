//! Post-processing of computed solutions: the weak-form residual, the energy
//! bound with its data term `M_g`, and the variational inequality.
//!
//! Space-time integrals of gradient quantities use the element quadrature in
//! space and the right-endpoint rule over levels `1..=nt` in time, matching
//! implicit Euler.

use serde::{Deserialize, Serialize};

use super::{sine_mode, Mesh, SolveConfig, SolverError};
use crate::grid::{Domain, SpaceTimeField};
use crate::model::IntegrandSpec;

/// Sine modes per axis in the finite test family for the dual norm.
pub const DUAL_MODES: usize = 16;

fn check_same_domain(a: &SpaceTimeField, b: &SpaceTimeField) -> Result<(), SolverError> {
    if a.domain() != b.domain() {
        return Err(SolverError::Config("fields live on different grids".into()));
    }
    Ok(())
}

/// `int (-u d_t phi + <flux(Du), D phi>)` in the discrete form that is
/// consistent with the scheme: it vanishes (up to the solver tolerance) on
/// computed solutions. `phi` must be nonnegative and vanish on boundary
/// nodes and on the first and last time slices.
pub fn weak_residual(
    u: &SpaceTimeField,
    phi: &SpaceTimeField,
    spec: &IntegrandSpec,
) -> Result<f64, SolverError> {
    check_same_domain(u, phi)?;
    let d = u.domain();
    let scale = phi.max_abs();
    let tiny = 1e-14 * scale.max(f64::MIN_POSITIVE);
    if let Some(v) = phi.values().iter().find(|&&v| v < -tiny) {
        return Err(SolverError::TestFunction(format!("negative value {v}")));
    }
    for j in 0..d.n_time() {
        for s in 0..d.n_space() {
            let edge = j == 0 || j == d.nt || d.is_boundary(s);
            if edge && phi.at(j, s).abs() > tiny {
                return Err(SolverError::TestFunction(format!(
                    "nonzero value {} on the parabolic boundary or final slice",
                    phi.at(j, s)
                )));
            }
        }
    }
    let mesh = Mesh::new(d, &spec.coefficients);
    let f = spec.integrand();
    let dt = d.dt();
    let mut total = 0.0;
    for j in 0..d.nt {
        let dphi: Vec<f64> = phi
            .slice(j + 1)
            .iter()
            .zip(phi.slice(j))
            .map(|(a, b)| a - b)
            .collect();
        total -= mesh.mass_dot(u.slice(j), &dphi);
    }
    for j in 1..=d.nt {
        let flux = mesh.fluxes(u.slice(j), &f);
        let grads = mesh.gradients(phi.slice(j));
        let pairing: f64 = mesh
            .elements
            .iter()
            .zip(flux.iter().zip(&grads))
            .map(|(e, (fl, g))| e.area * (fl[0] * g[0] + fl[1] * g[1]))
            .sum();
        total += dt * pairing;
    }
    Ok(total)
}

/// Both sides of the energy bound and the Poincaré estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyData {
    /// `sup_t int |u|^2`
    pub sup_l2: f64,
    /// `(int |Du|^{p_alpha})^{(alpha+1)/alpha}`
    pub gradient_term: f64,
    /// `eps int |Du|^{q_beta}`
    pub eps_term: f64,
    pub lhs: f64,
    /// `||d_t g||^{p'}` in `L^{p_alpha'}(W^{-1,p_alpha'})`, over the finite sine family.
    pub dual_term: f64,
    /// `||g||^p` in `L^{p_alpha}(W^{1,p_alpha})`
    pub sobolev_term: f64,
    /// `||Dg||_{L^gamma}^{p/(p+1-q)}`
    pub gamma_term: f64,
    /// `mu^{q-1} ||Dg||_{L^{beta'}}`
    pub mu_term: f64,
    /// `sup_t int |g|^2`
    pub l2_term: f64,
    pub m_g: f64,
    /// `eps ||Dg||_{L^{q_beta}}^{q_beta}`
    pub eps_data_term: f64,
    /// `lhs / (M_g + eps term)`
    pub c_emp: f64,
    /// `int |u|^{p_alpha}`
    pub poincare_lhs: f64,
    /// `int |u|^{p_alpha} / (M_g + eps term)^{alpha/(alpha+1)}`
    pub poincare_ratio: f64,
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

fn time_sum(d: &Domain, g: impl Fn(usize) -> f64) -> f64 {
    (1..=d.nt).map(|j| d.dt() * g(j)).sum()
}

fn sup_slices(mesh: &Mesh, f: &SpaceTimeField) -> f64 {
    (0..f.domain().n_time())
        .map(|j| mesh.mass_power(f.slice(j), 2.0))
        .fold(0.0, f64::max)
}

pub fn energy_report(u: &SpaceTimeField, cfg: &SolveConfig) -> EnergyData {
    let d = u.domain();
    let params = &cfg.spec.params;
    let ex = cfg.spec.exponents();
    let mesh = Mesh::new(d, &cfg.spec.coefficients);
    let g = cfg.boundary.sample(d);
    let alpha_exp = if params.alpha.is_infinite() {
        1.0
    } else {
        (params.alpha + 1.0) / params.alpha
    };

    let sup_l2 = sup_slices(&mesh, u);
    let gradient_term =
        time_sum(d, |j| mesh.gradient_power(u.slice(j), ex.p_alpha)).powf(alpha_exp);
    let eps_term = params.eps * time_sum(d, |j| mesh.gradient_power(u.slice(j), ex.q_beta));
    let lhs = sup_l2 + gradient_term + eps_term;

    let dual_term = dual_term(cfg, &mesh, ex.p_alpha, params.p);
    let sobolev_term = time_sum(d, |j| {
        mesh.mass_power(g.slice(j), ex.p_alpha) + mesh.gradient_power(g.slice(j), ex.p_alpha)
    })
    .powf(params.p / ex.p_alpha);
    let gamma_term =
        time_sum(d, |j| mesh.gradient_power(g.slice(j), ex.gamma)).powf(ex.intrinsic / ex.gamma);
    let mu_term = if params.mu == 0.0 {
        0.0
    } else {
        params.mu.powf(params.q - 1.0)
            * time_sum(d, |j| mesh.gradient_power(g.slice(j), ex.beta_conj))
                .powf(1.0 / ex.beta_conj)
    };
    let l2_term = sup_slices(&mesh, &g);
    let m_g = dual_term + sobolev_term + gamma_term + mu_term + l2_term;
    let eps_data_term = params.eps * time_sum(d, |j| mesh.gradient_power(g.slice(j), ex.q_beta));

    let data = m_g + eps_data_term;
    let poincare_lhs = time_sum(d, |j| mesh.mass_power(u.slice(j), ex.p_alpha));
    let poincare_exp = if params.alpha.is_infinite() {
        1.0
    } else {
        params.alpha / (params.alpha + 1.0)
    };
    EnergyData {
        sup_l2,
        gradient_term,
        eps_term,
        lhs,
        dual_term,
        sobolev_term,
        gamma_term,
        mu_term,
        l2_term,
        m_g,
        eps_data_term,
        c_emp: quotient(lhs, data),
        poincare_lhs,
        poincare_ratio: quotient(poincare_lhs, data.powf(poincare_exp)),
    }
}

/// `(||psi'||_{L^{p_alpha'}(0,T)} sup_k |int g_0 phi_k| / ||D phi_k||_{L^{p_alpha}})^{p'}`
/// for separable data, zero for time-independent data.
fn dual_term(cfg: &SolveConfig, mesh: &Mesh, p_alpha: f64, p: f64) -> f64 {
    let datum = &cfg.boundary;
    if datum.is_time_independent() {
        return 0.0;
    }
    let d = &mesh.domain;
    let r = p_alpha / (p_alpha - 1.0);
    let psi_norm = {
        let dt = d.dt();
        let sum: f64 = (0..d.n_time())
            .map(|j| {
                let w = if j == 0 || j == d.nt { 0.5 * dt } else { dt };
                w * datum.dpsi(d.time(j)).abs().powf(r)
            })
            .sum();
        sum.powf(1.0 / r)
    };
    let g0: Vec<f64> = (0..d.n_space())
        .map(|s| datum.profile.eval(&d.coords(s)[..d.n], d))
        .collect();
    let mut best: f64 = 0.0;
    let ky_max = if d.n == 2 { DUAL_MODES } else { 1 };
    for ky in 1..=ky_max {
        for kx in 1..=DUAL_MODES {
            let phi: Vec<f64> = (0..d.n_space())
                .map(|s| sine_mode(&d.coords(s), d, &[kx, ky]))
                .collect();
            let pairing = mesh.mass_dot(&g0, &phi).abs();
            let norm = mesh.gradient_power(&phi, p_alpha).powf(1.0 / p_alpha);
            if norm > 0.0 {
                best = best.max(pairing / norm);
            }
        }
    }
    (psi_norm * best).powf(p / (p - 1.0))
}

fn check_lateral_match(v: &SpaceTimeField, cfg: &SolveConfig) -> Result<(), SolverError> {
    let d = v.domain();
    let mut deviation: f64 = 0.0;
    let mut scale: f64 = 1.0;
    for j in 0..d.n_time() {
        let t = d.time(j);
        for s in 0..d.n_space() {
            if d.is_boundary(s) {
                let g = cfg.boundary.eval(&d.coords(s)[..d.n], t, d);
                scale = scale.max(g.abs());
                deviation = deviation.max((v.at(j, s) - g).abs());
            }
        }
    }
    if deviation > 1e-12 * scale {
        return Err(SolverError::BoundaryMismatch { deviation });
    }
    Ok(())
}

/// Right minus left side of the variational inequality at every time level
/// `tau = t_J`, `J = 0..=nt`:
/// `int_{Omega_tau} f(Dv) + int_0^tau <d_t v, v - u> - 1/2 |(v-u)(tau)|^2
///  + 1/2 |(v-g)(0)|^2 - int_{Omega_tau} f(Du)`,
/// with `d_t v` the backward difference over each step. For a computed
/// solution every entry is bounded below by
/// `1/2 sum_j |(v-u)^j - (v-u)^{j-1}|^2` minus solver error.
pub fn variational_gap_profile(
    u: &SpaceTimeField,
    v: &SpaceTimeField,
    cfg: &SolveConfig,
) -> Result<Vec<f64>, SolverError> {
    check_same_domain(u, v)?;
    check_lateral_match(v, cfg)?;
    let d = u.domain();
    let mesh = Mesh::new(d, &cfg.spec.coefficients);
    let f = cfg.spec.integrand();
    let dt = d.dt();
    let g0 = cfg.boundary.slice(d, 0.0);
    let init: Vec<f64> = v.slice(0).iter().zip(&g0).map(|(a, b)| a - b).collect();
    let init_term = 0.5 * mesh.mass_power(&init, 2.0);
    let diff = |j: usize| -> Vec<f64> {
        v.slice(j)
            .iter()
            .zip(u.slice(j))
            .map(|(a, b)| a - b)
            .collect()
    };

    let mut out = Vec::with_capacity(d.n_time());
    let w0 = diff(0);
    out.push(init_term - 0.5 * mesh.mass_power(&w0, 2.0));
    let mut running = 0.0;
    for j in 1..=d.nt {
        let w = diff(j);
        let dv: Vec<f64> = v
            .slice(j)
            .iter()
            .zip(v.slice(j - 1))
            .map(|(a, b)| a - b)
            .collect();
        running += dt * (mesh.energy(v.slice(j), &f) - mesh.energy(u.slice(j), &f))
            + mesh.mass_dot(&dv, &w);
        out.push(running - 0.5 * mesh.mass_power(&w, 2.0) + init_term);
    }
    Ok(out)
}

/// The variational gap at time level `tau_level`.
pub fn variational_gap(
    u: &SpaceTimeField,
    v: &SpaceTimeField,
    tau_level: usize,
    cfg: &SolveConfig,
) -> Result<f64, SolverError> {
    if tau_level > u.domain().nt {
        return Err(SolverError::Config(format!(
            "time level {tau_level} beyond the grid"
        )));
    }
    Ok(variational_gap_profile(u, v, cfg)?[tau_level])
}

/// Magnitude of the terms entering the gap profile:
/// `int f(Dv) + int f(Du) + 1/2 max_j (|v^j|^2 + |u^j|^2)`.
pub fn variational_gap_scale(
    u: &SpaceTimeField,
    v: &SpaceTimeField,
    cfg: &SolveConfig,
) -> Result<f64, SolverError> {
    check_same_domain(u, v)?;
    let d = u.domain();
    let mesh = Mesh::new(d, &cfg.spec.coefficients);
    let f = cfg.spec.integrand();
    let energy = time_sum(d, |j| {
        mesh.energy(v.slice(j), &f) + mesh.energy(u.slice(j), &f)
    });
    let mass = (0..d.n_time())
        .map(|j| 0.5 * (mesh.mass_power(v.slice(j), 2.0) + mesh.mass_power(u.slice(j), 2.0)))
        .fold(0.0, f64::max);
    Ok(energy + mass)
}

/// Comparison maps `v = g + A S_k(x) psi(t)` with `S_k` a sine mode, which
/// agree with `g` on the lateral boundary.
pub fn comparison_presets(cfg: &SolveConfig) -> Vec<(String, SpaceTimeField)> {
    let d = &cfg.domain;
    let t_final = d.t_final;
    let presets: [(&str, f64, usize, fn(f64) -> f64); 5] = [
        ("bump", 0.5, 1, |_| 1.0),
        ("dip", -0.5, 1, |_| 1.0),
        ("mode2", 0.3, 2, |_| 1.0),
        ("ramp", 0.5, 1, |s| s),
        ("fade", 0.2, 3, |s| 1.0 - s),
    ];
    presets
        .iter()
        .map(|&(name, amp, k, psi)| {
            let field = SpaceTimeField::from_fn(d.clone(), |x, t| {
                let mut pad = [0.0; 2];
                pad[..x.len()].copy_from_slice(x);
                cfg.boundary.eval(x, t, d) + amp * sine_mode(&pad, d, &[k, k]) * psi(t / t_final)
            });
            (name.to_string(), field)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::super::{solve, BoundaryDatum, Profile, SolverSettings};
    use super::*;
    use crate::exponents::StructureParams;
    use crate::model::CoefficientSpec;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn heat(nx: usize, nt: usize) -> SolveConfig {
        let params = StructureParams::new(1, 2.0, 2.0, f64::INFINITY, f64::INFINITY);
        SolveConfig {
            domain: Domain::unit(1, 0.1, nx, nt).unwrap(),
            spec: IntegrandSpec::new(params, CoefficientSpec::constant(0.5, 0.5)).unwrap(),
            boundary: BoundaryDatum::steady(Profile::Sine {
                amplitude: 1.0,
                mode: 1,
            }),
            settings: SolverSettings {
                damping: 1.0,
                ..Default::default()
            },
        }
    }

    fn bump(d: &Domain) -> SpaceTimeField {
        let t_final = d.t_final;
        SpaceTimeField::from_fn(d.clone(), |x, t| {
            let s = t / t_final;
            (PI * x[0]).sin().powi(2) * (s * (1.0 - s)).powi(2)
        })
    }

    #[test]
    fn weak_residual_vanishes_on_solutions() {
        let cfg = heat(33, 40);
        let u = solve(&cfg).unwrap().field;
        let r = weak_residual(&u, &bump(&cfg.domain), &cfg.spec).unwrap();
        assert!(r.abs() < 1e-10, "{r}");
        let zero = SpaceTimeField::zeros(cfg.domain.clone());
        assert_eq!(weak_residual(&u, &zero, &cfg.spec).unwrap(), 0.0);
        let c = SpaceTimeField::constant(cfg.domain.clone(), 2.0);
        assert!(
            weak_residual(&c, &bump(&cfg.domain), &cfg.spec)
                .unwrap()
                .abs()
                < 1e-14
        );
    }

    #[test]
    fn weak_residual_of_exact_solution_is_small() {
        let cfg = heat(33, 40);
        let exact = SpaceTimeField::from_fn(cfg.domain.clone(), |x, t| {
            (-PI * PI * t).exp() * (PI * x[0]).sin()
        });
        let r1 = weak_residual(&exact, &bump(&cfg.domain), &cfg.spec).unwrap();
        let fine = heat(65, 160);
        let exact = SpaceTimeField::from_fn(fine.domain.clone(), |x, t| {
            (-PI * PI * t).exp() * (PI * x[0]).sin()
        });
        let r2 = weak_residual(&exact, &bump(&fine.domain), &fine.spec).unwrap();
        assert!(r2.abs() < r1.abs() / 2.0, "{r1} {r2}");
    }

    #[test]
    fn weak_residual_preconditions() {
        let cfg = heat(9, 8);
        let u = SpaceTimeField::zeros(cfg.domain.clone());
        let neg = bump(&cfg.domain).map(|v| -v);
        assert!(matches!(
            weak_residual(&u, &neg, &cfg.spec),
            Err(SolverError::TestFunction(_))
        ));
        let full = SpaceTimeField::constant(cfg.domain.clone(), 1.0);
        assert!(matches!(
            weak_residual(&u, &full, &cfg.spec),
            Err(SolverError::TestFunction(_))
        ));
    }

    #[test]
    fn energy_of_zero_and_heat() {
        let mut cfg = heat(33, 40);
        cfg.boundary = BoundaryDatum::zero();
        let z = SpaceTimeField::zeros(cfg.domain.clone());
        let e = energy_report(&z, &cfg);
        assert_eq!((e.lhs, e.m_g, e.c_emp), (0.0, 0.0, 0.0));

        let cfg = heat(33, 40);
        let u = solve(&cfg).unwrap().field;
        let e = energy_report(&u, &cfg);
        assert_eq!(e.dual_term, 0.0);
        let mesh = Mesh::new(&cfg.domain, &cfg.spec.coefficients);
        assert!(e.sup_l2 <= mesh.mass_power(u.slice(0), 2.0) + 1e-14);
        assert!(e.c_emp > 0.0 && e.c_emp.is_finite());
    }

    #[test]
    fn dual_term_for_separable_data() {
        let mut cfg = heat(33, 20);
        cfg.boundary = BoundaryDatum {
            profile: Profile::Sine {
                amplitude: 1.0,
                mode: 1,
            },
            time_poly: vec![0.0, 1.0],
        };
        let u = solve(&cfg).unwrap().field;
        let e = energy_report(&u, &cfg);
        // psi' = 1, p_alpha = 2: ||psi'|| = sqrt(T), and the k = 1 mode gives (1/2) / (pi / sqrt 2)
        let expected = (0.1f64.sqrt() * 0.5 / (PI / 2f64.sqrt())).powi(2);
        assert_relative_eq!(e.dual_term, expected, max_relative = 1e-2);
    }

    #[test]
    fn variational_gap_examples() {
        let cfg = heat(33, 40);
        let u = solve(&cfg).unwrap().field;
        let same = variational_gap_profile(&u, &u, &cfg).unwrap();
        assert!(same.iter().all(|&g| g == 0.0));

        let zero = SpaceTimeField::zeros(cfg.domain.clone());
        let gaps = variational_gap_profile(&u, &zero, &cfg).unwrap();
        assert_eq!(gaps[0], 0.0);
        assert!(gaps[1..].iter().all(|&g| g > 0.0));
        // for v = 0 and u = e^{-pi^2 t} sin(pi x) the energy identity leaves
        // 1/2 int_0^tau int |Du|^2 = (1 - e^{-2 pi^2 tau}) / 8
        let decay = (-2.0 * PI * PI * 0.1f64).exp();
        let closed = (1.0 - decay) / 8.0;
        assert_relative_eq!(gaps[40], closed, max_relative = 0.05);

        for (_, v) in comparison_presets(&cfg) {
            let gaps = variational_gap_profile(&u, &v, &cfg).unwrap();
            assert!(gaps.iter().all(|&g| g >= -1e-9));
        }
        let bad = SpaceTimeField::constant(cfg.domain.clone(), 1.0);
        assert!(matches!(
            variational_gap(&u, &bad, 3, &cfg),
            Err(SolverError::BoundaryMismatch { .. })
        ));
    }
}
