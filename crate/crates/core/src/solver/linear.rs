//! Linear solvers for the symmetric positive definite systems of one Picard
//! iteration. All reductions run sequentially in index order.

/// Solves a tridiagonal system in place; `lower[0]` and `upper[n-1]` are
/// ignored.
pub fn thomas(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &mut [f64]) {
    let n = diag.len();
    if n == 0 {
        return;
    }
    let mut c = vec![0.0; n];
    let mut beta = diag[0];
    c[0] = upper[0] / beta;
    rhs[0] /= beta;
    for i in 1..n {
        beta = diag[i] - lower[i] * c[i - 1];
        c[i] = upper[i] / beta;
        rhs[i] = (rhs[i] - lower[i] * rhs[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= c[i] * rhs[i + 1];
    }
}

/// Outcome of a conjugate-gradient solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOutcome {
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Jacobi-preconditioned CG on the entries where `diag > 0`; entries with a
/// zero diagonal are held fixed. Stops once `max |r_s| / scale_s <= tol`.
pub fn pcg(
    apply: impl Fn(&[f64], &mut [f64]),
    diag: &[f64],
    rhs: &[f64],
    scale: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> CgOutcome {
    let n = rhs.len();
    let mut ax = vec![0.0; n];
    apply(x, &mut ax);
    let active: Vec<bool> = diag.iter().map(|&d| d > 0.0).collect();
    let mut r: Vec<f64> = (0..n)
        .map(|i| if active[i] { rhs[i] - ax[i] } else { 0.0 })
        .collect();
    let measure = |r: &[f64]| (0..n).fold(0.0f64, |m, i| m.max((r[i] / scale[i]).abs()));
    let mut res = measure(&r);
    if res <= tol {
        return CgOutcome {
            iterations: 0,
            residual: res,
            converged: true,
        };
    }
    let precond = |r: &[f64], z: &mut [f64]| {
        for i in 0..n {
            z[i] = if active[i] { r[i] / diag[i] } else { 0.0 };
        }
    };
    let mut z = vec![0.0; n];
    precond(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 1..=max_iter {
        apply(&p, &mut ap);
        for i in 0..n {
            if !active[i] {
                ap[i] = 0.0;
            }
        }
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return CgOutcome {
                iterations: it,
                residual: res,
                converged: false,
            };
        }
        let step = rz / pap;
        for i in 0..n {
            x[i] += step * p[i];
            r[i] -= step * ap[i];
        }
        res = measure(&r);
        if res <= tol {
            return CgOutcome {
                iterations: it,
                residual: res,
                converged: true,
            };
        }
        precond(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    CgOutcome {
        iterations: max_iter,
        residual: res,
        converged: false,
    }
}
