use std::f64::consts::PI;
use std::io::Write;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pqlab::degiorgi::caccioppoli_sides;
use pqlab::exponents::{check_gap, derive, epsilon_threshold, ExponentChain, StructureParams};
use pqlab::grid::{lp_norm, Domain, Region, SpaceTimeField};
use pqlab::harness::{emit_reports, run_sweep, ExperimentConfig, SweepRun};
use pqlab::lemmas::{
    geometric_iterate, mollifier_derivative_residual, mollify_time, GeometricIteration,
};
use pqlab::model::{norm2, CoefficientKind, CoefficientSpec, IntegrandSpec};
use pqlab::solver::{energy_report, solve, BoundaryDatum, Profile, SolveConfig, SolverSettings};

const DEGENERATE: &str = include_str!("../../../configs/degenerate.toml");

/// Prints one line per criterion, bypassing the test harness capture.
fn report(id: u32, name: &str, pass: bool, elapsed: Duration, detail: String) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(
        std::io::stderr().lock(),
        "acceptance {id:>2} {name}: {verdict} ({:.2} s) {detail}",
        elapsed.as_secs_f64()
    );
}

fn reference_params() -> StructureParams {
    StructureParams::new(2, 2.0, 2.1, 20.0, 20.0)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

#[test]
fn criterion_01_exponent_suite() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut accepted, mut failures) = (0, Vec::new());
    while accepted < 1000 {
        let n = rng.gen_range(1..=4);
        let p = rng.gen_range(2.0..4.0);
        let pick = |rng: &mut ChaCha8Rng| {
            if rng.gen_bool(0.1) {
                f64::INFINITY
            } else {
                rng.gen_range(2.0..200.0)
            }
        };
        let (alpha, beta) = (pick(&mut rng), pick(&mut rng));
        let mut params = StructureParams::new(n, p, p, alpha, beta);
        let Ok(gap) = check_gap(&params) else {
            continue;
        };
        if gap.rhs <= p {
            continue;
        }
        params.q = p + rng.gen_range(0.0..1.0) * (gap.rhs - p);
        if !check_gap(&params).map(|g| g.holds).unwrap_or(false) {
            continue;
        }
        accepted += 1;
        let d = derive(&params).unwrap();
        let q = params.q;
        let identity = d.theta3 * (d.m - d.gamma) * (1.0 + d.kappa);
        let ok = ExponentChain::new(&params, &d).holds(1e-12)
            && d.gamma < d.m
            && d.kappa > (q - p) / (p + 1.0 - q) - 1e-12
            && d.theta1 > 0.0
            && d.theta2 > 0.0
            && d.theta3 > 0.0
            && rel(identity, d.kappa) <= 1e-12;
        if !ok {
            failures.push(params);
        }
    }
    let elapsed = start.elapsed();
    let pass = failures.is_empty() && elapsed < Duration::from_secs(1);
    report(
        1,
        "exponent suite",
        pass,
        elapsed,
        format!("1000 tuples, {} failures", failures.len()),
    );
    assert!(pass, "{failures:?}");
}

#[test]
fn criterion_02_reference_tuple() {
    let start = Instant::now();
    let d = derive(&reference_params()).unwrap();
    let expected = [
        (d.p_alpha, 40.0 / 21.0),
        (d.q_beta, 42.0 / 19.0),
        (d.gamma, 400.0 / 149.0),
        (d.m, 80.0 / 21.0),
        (d.kappa, 109.0 / 189.0),
        (d.theta1, 189.0 / 352.0),
        (d.theta2, 105.0 / 88.0),
        (d.theta3, 2289.0 / 7040.0),
    ];
    let worst = expected
        .iter()
        .map(|&(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let elapsed = start.elapsed();
    let pass = worst <= 1e-12 && elapsed < Duration::from_secs(1);
    report(
        2,
        "reference tuple",
        pass,
        elapsed,
        format!("max deviation {worst:.2e}"),
    );
    assert!(pass);
}

#[test]
fn criterion_03_mollifier() {
    let start = Instant::now();

    let d = Domain::unit(1, 1.0, 3, 200).unwrap();
    let h = 0.5;
    let m = mollify_time(&SpaceTimeField::constant(d.clone(), 1.0), h).unwrap();
    let closed = (0..d.n_time())
        .flat_map(|j| (0..d.n_space()).map(move |s| (j, s)))
        .map(|(j, s)| (m.at(j, s) - (1.0 - (-(1.0 - d.time(j)) / h).exp())).abs())
        .fold(0.0, f64::max);

    let params = reference_params();
    let ex = derive(&params).unwrap();
    let d = Domain::unit(1, 1.0, 9, 64).unwrap();
    let h = 0.25;
    let allowed = 1.0 + 5.0 * d.dt() / h;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut inflation: f64 = 0.0;
    for _ in 0..100 {
        let values = (0..d.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v = SpaceTimeField::new(d.clone(), values).unwrap();
        let m = mollify_time(&v, h).unwrap();
        for r in [1.0, 2.0, ex.p_alpha, ex.q_beta, ex.m] {
            let ratio =
                lp_norm(&m, r, &Region::Whole).unwrap() / lp_norm(&v, r, &Region::Whole).unwrap();
            inflation = inflation.max(ratio);
        }
    }

    let residual = |nt: usize| {
        let d = Domain::unit(1, 1.0, 5, nt).unwrap();
        let v = SpaceTimeField::from_fn(d, |x, t| (3.0 * t).sin() * (1.0 + x[0]) + t * t);
        mollifier_derivative_residual(&v, 0.3).unwrap()
    };
    let residuals: Vec<f64> = [20, 40, 80, 160].iter().map(|&nt| residual(nt)).collect();
    let order = residuals
        .windows(2)
        .map(|w| (w[0] / w[1]).log2())
        .fold(f64::INFINITY, f64::min);

    let elapsed = start.elapsed();
    let pass = closed <= 1e-10
        && inflation <= allowed
        && order >= 1.8
        && elapsed < Duration::from_secs(10);
    report(
        3,
        "mollifier",
        pass,
        elapsed,
        format!("closed form {closed:.2e}, inflation {inflation:.4} (allowed {allowed:.4}), order {order:.3}"),
    );
    assert!(pass);
}

#[test]
fn criterion_04_geometric_convergence() {
    let start = Instant::now();
    let g = GeometricIteration {
        c: 1.0,
        lambda: 2.0,
        kappa: 1.0,
        x0: 0.5,
    };
    let t = geometric_iterate(&g, 200).unwrap();
    let exact = t
        .values
        .iter()
        .enumerate()
        .map(|(i, x)| (x - 0.5f64.powi(i as i32 + 1)).abs() / 0.5f64.powi(i as i32 + 1))
        .fold(0.0, f64::max);

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut bad = 0;
    let mut longest = 0;
    for _ in 0..200 {
        let mut g = GeometricIteration {
            c: rng.gen_range(0.5..10.0),
            lambda: rng.gen_range(1.5..10.0),
            kappa: rng.gen_range(0.25..2.0),
            x0: 0.0,
        };
        g.x0 = rng.gen_range(0.01..0.95) * g.threshold();
        let t = geometric_iterate(&g, 200).unwrap();
        let last = *t.values.last().unwrap();
        longest = longest.max(t.values.len() - 1);
        if !(t.converged && last < 1e-12 && t.values.len() <= 201) {
            bad += 1;
        }
    }
    let elapsed = start.elapsed();
    let pass = exact <= 1e-14 && t.converged && bad == 0 && elapsed < Duration::from_secs(5);
    report(
        4,
        "geometric convergence",
        pass,
        elapsed,
        format!(
            "trajectory error {exact:.2e}, 200 draws with {bad} failures, longest {longest} steps"
        ),
    );
    assert!(pass);
}

fn heat_config(nx: usize, nt: usize) -> SolveConfig {
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

fn heat_error(u: &SpaceTimeField) -> f64 {
    let d = u.domain();
    (0..d.n_time())
        .flat_map(|j| (0..d.n_space()).map(move |s| (j, s)))
        .map(|(j, s)| {
            let x = d.coords(s)[0];
            (u.at(j, s) - (-PI * PI * d.time(j)).exp() * (PI * x).sin()).abs()
        })
        .fold(0.0, f64::max)
}

#[test]
fn criterion_05_solver_oracle() {
    let start = Instant::now();
    let error = heat_error(&solve(&heat_config(65, 400)).unwrap().field);

    // temporal order from successive dt halvings at fixed space grid, so the
    // spatial error cancels in the differences
    let finals: Vec<Vec<f64>> = [50, 100, 200, 400]
        .iter()
        .map(|&nt| {
            let u = solve(&heat_config(65, nt)).unwrap().field;
            u.slice(nt).to_vec()
        })
        .collect();
    let diffs: Vec<f64> = finals
        .windows(2)
        .map(|w| {
            w[0].iter()
                .zip(&w[1])
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    let orders: Vec<f64> = diffs.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let order = orders.iter().copied().fold(f64::INFINITY, f64::min);

    let elapsed = start.elapsed();
    let pass = error < 5e-3 && order >= 0.9 && elapsed < Duration::from_secs(60);
    report(
        5,
        "solver oracle",
        pass,
        elapsed,
        format!("max nodal error {error:.3e} on 65x400, temporal orders {orders:.3?}"),
    );
    assert!(pass);
}

#[test]
fn criterion_06_flux_integrand_consistency() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut fd_worst, mut mono_worst, mut coer_worst) = (0.0f64, f64::INFINITY, f64::INFINITY);
    for _ in 0..100 {
        let mu = if rng.gen_bool(0.5) {
            0.0
        } else {
            rng.gen_range(0.0..1.0)
        };
        let eps = if rng.gen_bool(0.5) {
            0.0
        } else {
            rng.gen_range(0.0..0.1)
        };
        let params = reference_params().with_mu(mu).with_eps(eps);
        let spec = IntegrandSpec::new(params, CoefficientSpec::constant(1.0, 1.0)).unwrap();
        let f = spec.integrand();
        let (a, b) = (rng.gen_range(0.01..2.0), rng.gen_range(0.0..2.0));
        let sample = |rng: &mut ChaCha8Rng| {
            let r = 10f64.powf(rng.gen_range(-2.0..2.0));
            let phi = rng.gen_range(0.0..2.0 * PI);
            [r * phi.cos(), r * phi.sin()]
        };
        let xi = sample(&mut rng);
        let eta = sample(&mut rng);

        let flux = f.flux(&xi, a, b);
        let step = 1e-5 * norm2(&xi).sqrt();
        let fd: Vec<f64> = (0..2)
            .map(|k| {
                let (mut up, mut down) = (xi, xi);
                up[k] += step;
                down[k] -= step;
                (f.value(&up, a, b) - f.value(&down, a, b)) / (2.0 * step)
            })
            .collect();
        let err = norm2(&[fd[0] - flux[0], fd[1] - flux[1]]).sqrt() / norm2(&flux).sqrt();
        fd_worst = fd_worst.max(err);

        let fe = f.flux(&eta, a, b);
        let dx = [xi[0] - eta[0], xi[1] - eta[1]];
        let pairing = (flux[0] - fe[0]) * dx[0] + (flux[1] - fe[1]) * dx[1];
        let size = (norm2(&flux).sqrt() + norm2(&fe).sqrt()) * norm2(&dx).sqrt();
        mono_worst = mono_worst.min(pairing / size);

        let s2 = norm2(&xi);
        let lower =
            a * (mu * mu + s2).powf(0.5 * (params.p - 2.0)) * s2 + eps * s2.powf(0.5 * f.q_beta);
        let inner = flux[0] * xi[0] + flux[1] * xi[1];
        coer_worst = coer_worst.min((inner - lower) / inner);
    }
    let elapsed = start.elapsed();
    let pass = fd_worst <= 1e-6
        && mono_worst >= -1e-14
        && coer_worst >= -1e-14
        && elapsed < Duration::from_secs(5);
    report(
        6,
        "flux-integrand consistency",
        pass,
        elapsed,
        format!("fd error {fd_worst:.2e}, monotonicity slack {mono_worst:.2e}, coercivity slack {coer_worst:.2e}"),
    );
    assert!(pass);
}

fn degenerate_config(nx: usize, nt: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::from_toml_str(DEGENERATE).unwrap();
    cfg.domain.nx = nx;
    cfg.domain.nt = nt;
    cfg
}

struct DegenerateRun {
    run: SweepRun,
    elapsed: Duration,
}

fn degenerate_runs() -> &'static [DegenerateRun; 2] {
    static RUNS: OnceLock<[DegenerateRun; 2]> = OnceLock::new();
    RUNS.get_or_init(|| {
        [(33, 100), (65, 200)].map(|(nx, nt)| {
            let start = Instant::now();
            let run = run_sweep(&degenerate_config(nx, nt)).unwrap();
            DegenerateRun {
                run,
                elapsed: start.elapsed(),
            }
        })
    })
}

#[test]
fn criterion_07_caccioppoli_and_sup_bound() {
    let start = Instant::now();
    let runs = degenerate_runs();
    let mut c_max: f64 = 0.0;
    let mut c_cal = [0.0f64; 2];
    let mut bookkeeping = true;
    for (g, r) in runs.iter().enumerate() {
        let report = &r.run.report;
        let cfg = &report.config;
        let params = cfg.structure_params();
        let d = report.exponents;
        let grid = cfg.grid().unwrap();
        let a = cfg.coefficient_a.sample(&grid);
        let b = cfg.coefficient_b.sample(&grid);
        assert!(report.failure.is_none());
        assert_eq!(report.items.len(), report.schedule.len());
        for (item, u) in report.items.iter().zip(&r.run.fields) {
            for t in &item.targets {
                let bound = &t.bound;
                // the recorded constant is the least multiplier of k with sup <= c_cal k
                c_cal[g] = c_cal[g].max(bound.ess_sup / bound.k_choice);
                c_max = c_max.max(t.c_min);
                let fresh = caccioppoli_sides(
                    u,
                    0.5 * bound.ess_sup,
                    &t.target.half(),
                    &t.target.full(),
                    &a,
                    &b,
                    &params.with_eps(item.eps),
                    &d,
                )
                .unwrap();
                c_max = c_max.max(fresh.c_min);

                let thr = epsilon_threshold(
                    bound.k_choice,
                    bound.rho,
                    bound.inputs.norm_a,
                    bound.inputs.norm_b,
                    &d,
                    &params,
                );
                bookkeeping &= thr == bound.eps_threshold && bound.eps_ok == (item.eps <= thr);
            }
        }
        let suffix = (0..report.items.len()).find(|&i| {
            report.items[i..].iter().all(|it| {
                it.targets.iter().all(|t| {
                    let b = &t.bound;
                    it.eps
                        <= epsilon_threshold(
                            b.k_choice,
                            b.rho,
                            b.inputs.norm_a,
                            b.inputs.norm_b,
                            &d,
                            &params,
                        )
                })
            })
        });
        bookkeeping &= suffix == report.compliance_index;
    }
    let drift = c_cal[0].max(c_cal[1]) / c_cal[0].min(c_cal[1]);
    let elapsed = start.elapsed().max(runs.iter().map(|r| r.elapsed).sum());
    let pass = c_max <= 1e3 && drift < 10.0 && bookkeeping && elapsed < Duration::from_secs(600);
    report(
        7,
        "Caccioppoli and sup bound",
        pass,
        elapsed,
        format!(
            "max c_min {c_max:.3e}, c_cal {:.4} (33x100) / {:.4} (65x200), drift {drift:.3}, bookkeeping {bookkeeping}",
            c_cal[0], c_cal[1]
        ),
    );
    assert!(pass);
}

fn energy_family() -> Vec<(&'static str, BoundaryDatum)> {
    vec![
        (
            "sine",
            BoundaryDatum::steady(Profile::Sine {
                amplitude: 1.0,
                mode: 1,
            }),
        ),
        (
            "sine2",
            BoundaryDatum::steady(Profile::Sine {
                amplitude: 0.5,
                mode: 2,
            }),
        ),
        (
            "gaussian",
            BoundaryDatum::steady(Profile::Gaussian {
                amplitude: 1.0,
                center: vec![0.5, 0.5],
                width: 0.3,
            }),
        ),
        (
            "affine",
            BoundaryDatum::steady(Profile::Affine {
                offset: 0.2,
                slope: vec![1.0, -0.5],
            }),
        ),
        (
            "constant",
            BoundaryDatum::steady(Profile::Constant { value: 0.7 }),
        ),
        (
            "growing sine",
            BoundaryDatum {
                profile: Profile::Sine {
                    amplitude: 1.0,
                    mode: 1,
                },
                time_poly: vec![1.0, 2.0],
            },
        ),
    ]
}

#[test]
fn criterion_08_energy_bound() {
    let start = Instant::now();
    let params = reference_params().with_eps(0.01);
    let coefficients = CoefficientSpec {
        a: CoefficientKind::Power {
            center: vec![0.5009765625, 0.50048828125],
            exponent: 0.09,
            floor: 0.0,
        },
        b: CoefficientKind::Constant { value: 1.0 },
    };
    let spec = IntegrandSpec::new(params, coefficients).unwrap();
    let mut worst_drift: f64 = 1.0;
    let mut dual_ok = true;
    let mut lines = Vec::new();
    for (name, boundary) in energy_family() {
        let c: Vec<f64> = [(17, 40), (33, 80)]
            .iter()
            .map(|&(nx, nt)| {
                let cfg = SolveConfig {
                    domain: Domain::unit(2, 0.25, nx, nt).unwrap(),
                    spec: spec.clone(),
                    boundary: boundary.clone(),
                    settings: SolverSettings {
                        damping: 1.0,
                        ..Default::default()
                    },
                };
                let u = solve(&cfg).unwrap().field;
                let e = energy_report(&u, &cfg);
                if boundary.is_time_independent() {
                    dual_ok &= e.dual_term == 0.0;
                } else {
                    dual_ok &= e.dual_term > 0.0;
                }
                e.c_emp
            })
            .collect();
        let drift = if c[0] > 0.0 && c[1] > 0.0 {
            c[0].max(c[1]) / c[0].min(c[1])
        } else {
            f64::INFINITY
        };
        worst_drift = worst_drift.max(drift);
        lines.push(format!("{name} {:.3}/{:.3}", c[0], c[1]));
    }
    let elapsed = start.elapsed();
    let pass = worst_drift < 10.0 && dual_ok && elapsed < Duration::from_secs(300);
    report(
        8,
        "energy bound",
        pass,
        elapsed,
        format!(
            "c_emp coarse/fine: {}; worst drift {worst_drift:.3}, dual terms {dual_ok}",
            lines.join(", ")
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_09_variational_inequality() {
    let start = Instant::now();
    let runs = degenerate_runs();
    let mut presets = usize::MAX;
    let mut worst = f64::INFINITY;
    let mut all_pass = true;
    for r in runs {
        let gaps = &r.run.report.gaps;
        presets = presets.min(gaps.iter().filter(|g| g.name != "solution").count());
        for g in gaps {
            let levels = r.run.report.config.domain.nt + 1;
            all_pass &=
                g.profile.len() == levels && g.profile.iter().all(|&v| v >= -1e-6 * g.scale);
            if g.name != "solution" {
                worst = worst.min(g.min_gap / g.scale);
            }
        }
    }
    let elapsed = start.elapsed().max(runs.iter().map(|r| r.elapsed).sum());
    let pass = presets >= 5 && all_pass && elapsed < Duration::from_secs(300);
    report(
        9,
        "variational inequality",
        pass,
        elapsed,
        format!(
            "{presets} comparison maps per grid, all time levels, worst scaled gap {worst:.3e}"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_10_determinism() {
    let start = Instant::now();
    let mut cfg = degenerate_config(17, 40);
    cfg.run.seed = 9;
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for dir in &dirs {
        emit_reports(&run_sweep(&cfg).unwrap(), dir.path()).unwrap();
    }
    let mut names: Vec<_> = std::fs::read_dir(dirs[0].path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    let identical = names.iter().all(|n| {
        std::fs::read(dirs[0].path().join(n)).unwrap()
            == std::fs::read(dirs[1].path().join(n)).unwrap()
    });
    let count = std::fs::read_dir(dirs[1].path()).unwrap().count();
    let elapsed = start.elapsed();
    let pass = identical && count == names.len() && !names.is_empty();
    report(
        10,
        "determinism",
        pass,
        elapsed,
        format!("{} report files byte-identical: {identical}", names.len()),
    );
    assert!(pass);
}
