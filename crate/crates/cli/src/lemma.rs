use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use pqlab::exponents::{derive, StructureParams};
use pqlab::grid::{lp_norm, Cylinder, Domain, Region, SpaceTimeField};
use pqlab::lemmas::{
    absorption_bound, geometric_iterate, interpolation_ratio, mollifier_derivative_residual,
    mollify_time, AbsorptionParams, GeometricIteration,
};

fn verdict(case: &str, pass: bool, detail: Value) -> Value {
    json!({ "case": case, "pass": pass, "detail": detail })
}

fn failed(case: &str, err: impl std::fmt::Display) -> Value {
    verdict(case, false, json!({ "error": err.to_string() }))
}

pub fn mollify(seed: u64) -> Vec<Value> {
    let mut out = Vec::new();

    let d = Domain::unit(1, 1.0, 3, 200).expect("grid");
    let h = 0.5;
    match mollify_time(&SpaceTimeField::constant(d.clone(), 1.0), h) {
        Ok(m) => {
            let err = (0..d.n_time())
                .map(|j| (m.at(j, 1) - (1.0 - (-(1.0 - d.time(j)) / h).exp())).abs())
                .fold(0.0, f64::max);
            out.push(verdict(
                "constant_closed_form",
                err <= 1e-10,
                json!({ "max_error": err }),
            ));
        }
        Err(e) => out.push(failed("constant_closed_form", e)),
    }

    let params = StructureParams::new(2, 2.0, 2.1, 20.0, 20.0);
    let ex = derive(&params).expect("reference exponents");
    let d = Domain::unit(1, 1.0, 9, 64).expect("grid");
    let h = 0.25;
    let slack = 1.0 + 5.0 * d.dt() / h;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let values = (0..d.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v = SpaceTimeField::new(d.clone(), values).expect("field");
        let m = mollify_time(&v, h).expect("positive h");
        for r in [1.0, 2.0, ex.p_alpha, ex.q_beta] {
            let a = lp_norm(&m, r, &Region::Whole).expect("norm");
            let b = lp_norm(&v, r, &Region::Whole).expect("norm");
            worst = worst.max(a / b);
        }
    }
    out.push(verdict(
        "contraction",
        worst <= slack,
        json!({ "worst_ratio": worst, "allowed": slack }),
    ));

    let smooth = |nt: usize| {
        let d = Domain::unit(1, 1.0, 5, nt).expect("grid");
        let v = SpaceTimeField::from_fn(d, |x, t| (3.0 * t).sin() * (1.0 + x[0]) + t * t);
        mollifier_derivative_residual(&v, 0.3).expect("positive h")
    };
    let residuals: Vec<f64> = [20, 40, 80, 160].iter().map(|&nt| smooth(nt)).collect();
    let orders: Vec<f64> = residuals.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let min_order = orders.iter().copied().fold(f64::INFINITY, f64::min);
    out.push(verdict(
        "derivative_residual_order",
        min_order >= 1.8,
        json!({ "residuals": residuals, "orders": orders }),
    ));
    out
}

pub fn interp() -> Vec<Value> {
    let mut out = Vec::new();
    let d = Domain::unit(1, 1.0, 201, 40).expect("grid");
    let cyl = |s: f64| Cylinder::new(vec![0.5], 1.0, 0.5, s);
    let p_alpha = 2.0;

    match interpolation_ratio(&SpaceTimeField::zeros(d.clone()), &cyl(0.5), p_alpha) {
        Ok(z) => out.push(verdict(
            "zero_field",
            z.ratio == 0.0,
            json!({ "ratio": z.ratio }),
        )),
        Err(e) => out.push(failed("zero_field", e)),
    }

    let sine = SpaceTimeField::from_fn(d.clone(), |x, _| (std::f64::consts::PI * x[0]).sin());
    let ratios: Result<Vec<f64>, _> = [0.2, 0.5, 0.9]
        .iter()
        .map(|&s| interpolation_ratio(&sine, &cyl(s), p_alpha).map(|r| r.ratio))
        .collect();
    match ratios {
        Ok(r) => {
            let spread = r.iter().map(|x| (x / r[0] - 1.0).abs()).fold(0.0, f64::max);
            out.push(verdict(
                "sine_depth_independent",
                spread <= 1e-10,
                json!({ "ratios": r }),
            ));
        }
        Err(e) => out.push(failed("sine_depth_independent", e)),
    }

    let bump = SpaceTimeField::from_fn(d, |x, t| (1.0 + t) * (x[0] * (1.0 - x[0])).powi(2));
    let doubled = bump.map(|v| 2.0 * v);
    match (
        interpolation_ratio(&bump, &cyl(0.5), p_alpha),
        interpolation_ratio(&doubled, &cyl(0.5), p_alpha),
    ) {
        (Ok(a), Ok(b)) => {
            let rel = (a.ratio / b.ratio - 1.0).abs();
            out.push(verdict(
                "scaling_invariance",
                rel <= 1e-10,
                json!({ "ratio": a.ratio, "scaled": b.ratio }),
            ));
        }
        (Err(e), _) | (_, Err(e)) => out.push(failed("scaling_invariance", e)),
    }
    out
}

pub fn geom(seed: u64) -> Vec<Value> {
    let mut out = Vec::new();
    let g = GeometricIteration {
        c: 1.0,
        lambda: 2.0,
        kappa: 1.0,
        x0: 0.5,
    };
    match geometric_iterate(&g, 60) {
        Ok(t) => {
            let err = t
                .values
                .iter()
                .enumerate()
                .map(|(i, x)| (x / 0.5f64.powi(i as i32 + 1) - 1.0).abs())
                .fold(0.0, f64::max);
            out.push(verdict(
                "exact_trajectory",
                err <= 1e-14 && t.converged,
                json!({ "max_relative_error": err, "steps": t.values.len() }),
            ));
        }
        Err(e) => out.push(failed("exact_trajectory", e)),
    }

    match geometric_iterate(&GeometricIteration { x0: 1.0, ..g }, 60) {
        Ok(t) => {
            let head_ok = t.values.len() >= 4 && t.values[..4] == [1.0, 1.0, 2.0, 16.0];
            out.push(verdict(
                "above_threshold_diverges",
                head_ok && t.diverged && !t.converged,
                json!({ "head": &t.values[..t.values.len().min(4)] }),
            ));
        }
        Err(e) => out.push(failed("above_threshold_diverges", e)),
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = Vec::new();
    let mut longest = 0;
    for k in 0..200 {
        let mut g = GeometricIteration {
            c: rng.gen_range(0.5..10.0),
            lambda: rng.gen_range(1.5..10.0),
            kappa: rng.gen_range(0.25..2.0),
            x0: 0.0,
        };
        g.x0 = rng.gen_range(0.01..0.95) * g.threshold();
        match geometric_iterate(&g, 200) {
            Ok(t) if t.converged => longest = longest.max(t.values.len() - 1),
            _ => failures.push(json!({ "draw": k, "params": [g.c, g.lambda, g.kappa, g.x0] })),
        }
    }
    out.push(verdict(
        "random_below_threshold",
        failures.is_empty(),
        json!({ "draws": 200, "longest": longest, "failures": failures }),
    ));
    out
}

pub fn absorb(seed: u64) -> Vec<Value> {
    let mut out = Vec::new();
    let base = AbsorptionParams {
        theta: 0.5,
        coef_a: 0.0,
        coef_b: 0.0,
        coef_c: 0.0,
        coef_d: 5.0,
        a: 2.0,
        b: 1.0,
        c: 0.5,
        rho: 0.25,
        sigma: 1.0,
    };
    let cases = [
        ("d_only", base, 5.0),
        (
            "unit_interval",
            AbsorptionParams {
                coef_a: 1.0,
                coef_b: 2.0,
                coef_c: 3.0,
                rho: 0.0,
                ..base
            },
            11.0,
        ),
        (
            "single_term",
            AbsorptionParams {
                coef_a: 1.0,
                coef_d: 0.0,
                rho: 0.5,
                ..base
            },
            4.0,
        ),
    ];
    for (name, p, expected) in cases {
        match absorption_bound(&p) {
            Ok(v) => out.push(verdict(
                name,
                (v - expected).abs() <= 1e-12,
                json!({ "value": v, "expected": expected }),
            )),
            Err(e) => out.push(failed(name, e)),
        }
    }

    // constant f = V/(1-theta) is the largest constant meeting the
    // hypothesis, so its empirical constant is exactly 1/(1-theta)
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for _ in 0..100 {
        let a = rng.gen_range(0.5..3.0);
        let b = rng.gen_range(0.0..a);
        let p = AbsorptionParams {
            theta: rng.gen_range(0.05..0.95),
            coef_a: rng.gen_range(0.0..2.0),
            coef_b: rng.gen_range(0.0..2.0),
            coef_c: rng.gen_range(0.0..2.0),
            coef_d: rng.gen_range(0.0..2.0),
            a,
            b,
            c: rng.gen_range(0.0..b.max(1e-9)),
            rho: 0.0,
            sigma: rng.gen_range(0.2..2.0),
        };
        let Ok(v) = absorption_bound(&p) else {
            ok = false;
            continue;
        };
        let f = v / (1.0 - p.theta);
        for i in 0..20 {
            for j in (i + 1)..=20 {
                let (r, s) = (p.sigma * i as f64 / 20.0, p.sigma * j as f64 / 20.0);
                ok &= f <= p.theta * f + p.forcing(r, s) + 1e-12 * f;
            }
        }
        let c = f / v;
        ok &= (c * (1.0 - p.theta) - 1.0).abs() <= 1e-12;
        worst = worst.max(c);
    }
    out.push(verdict(
        "constant_family",
        ok,
        json!({ "draws": 100, "largest_constant": worst }),
    ));
    out
}
