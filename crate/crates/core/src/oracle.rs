//! Slow, independent lasso solvers used to certify the path solver.
//!
//! Nothing here shares code with [`crate::path`] beyond the KKT check, which
//! is the optimality certificate both sides are measured against.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::dataset::StandardizedDataset;
use crate::error::{Error, Result};
use crate::path::{kkt_check_xy, LassoPath};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 100_000;

#[derive(Debug, Clone)]
pub struct OracleSolution {
    pub beta: Array1<f64>,
    pub iterations: usize,
    pub max_kkt_violation: f64,
}

/// `‖y − Xβ‖² + λ·Σ|βⱼ|`.
pub fn objective(x: ArrayView2<f64>, y: ArrayView1<f64>, beta: ArrayView1<f64>, lambda: f64) -> f64 {
    let r = &y - &x.dot(&beta);
    r.dot(&r) + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
}

fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Cyclic coordinate-wise minimization started from zero.
pub fn solve_iterative(ds: &StandardizedDataset, lambda: f64, tol: f64, max_iter: usize) -> Result<OracleSolution> {
    solve_iterative_xy(ds.x.view(), ds.y.view(), lambda, None, tol, max_iter)
}

/// Coordinate descent on any design with nonzero columns, optionally warm-started.
///
/// Stops once the KKT violation is at most `tol·(1 + λ)`.
pub fn solve_iterative_xy(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    lambda: f64,
    start: Option<ArrayView1<f64>>,
    tol: f64,
    max_iter: usize,
) -> Result<OracleSolution> {
    if !(lambda >= 0.0) {
        return Err(Error::InvalidInput(format!("lambda must be nonnegative, got {lambda}")));
    }
    let p = x.ncols();
    let norms: Vec<f64> = x.axis_iter(Axis(1)).map(|c| c.dot(&c)).collect();
    let mut beta = start.map_or_else(|| Array1::zeros(p), |s| s.to_owned());
    let mut resid = &y - &x.dot(&beta);
    let threshold = tol * (1.0 + lambda);
    let mut violation = f64::INFINITY;
    for sweep in 1..=max_iter {
        for j in 0..p {
            let col = x.column(j);
            let old = beta[j];
            let z = col.dot(&resid) + norms[j] * old;
            let new = soft_threshold(z, lambda / 2.0) / norms[j];
            if new != old {
                resid.scaled_add(old - new, &col);
                beta[j] = new;
            }
        }
        // Recompute the residual to keep drift out of the certificate.
        resid = &y - &x.dot(&beta);
        violation = kkt_check_xy(x, y, beta.view(), lambda).max();
        if violation <= threshold {
            return Ok(OracleSolution {
                beta,
                iterations: sweep,
                max_kkt_violation: violation,
            });
        }
    }
    Err(Error::NotConverged {
        iterations: max_iter,
        violation,
    })
}

/// Coordinate descent in Gram form for `βᵀGβ − 2βᵀc + λ|β|₁`.
pub fn solve_gram(
    gram: ArrayView2<f64>,
    xty: ArrayView1<f64>,
    lambda: f64,
    tol: f64,
    max_iter: usize,
) -> Result<OracleSolution> {
    let p = xty.len();
    let mut beta = Array1::<f64>::zeros(p);
    let threshold = tol * (1.0 + lambda);
    let mut violation = f64::INFINITY;
    for sweep in 1..=max_iter {
        for j in 0..p {
            let z = xty[j] - gram.row(j).dot(&beta) + gram[[j, j]] * beta[j];
            beta[j] = soft_threshold(z, lambda / 2.0) / gram[[j, j]];
        }
        let grad = &xty - &gram.dot(&beta);
        violation = grad
            .iter()
            .zip(beta.iter())
            .map(|(g, b)| {
                if *b != 0.0 {
                    (2.0 * g - lambda * b.signum()).abs()
                } else {
                    (2.0 * g.abs() - lambda).max(0.0)
                }
            })
            .fold(0.0, f64::max);
        if violation <= threshold {
            return Ok(OracleSolution {
                beta,
                iterations: sweep,
                max_kkt_violation: violation,
            });
        }
    }
    Err(Error::NotConverged {
        iterations: max_iter,
        violation,
    })
}

/// Gaussian elimination with partial pivoting; `None` if singular.
fn gauss_solve(mut a: Array2<f64>, mut b: Array1<f64>) -> Option<Array1<f64>> {
    let k = b.len();
    for c in 0..k {
        let piv = (c..k).max_by(|&i, &j| a[[i, c]].abs().total_cmp(&a[[j, c]].abs()))?;
        if a[[piv, c]].abs() < 1e-14 {
            return None;
        }
        if piv != c {
            for col in 0..k {
                a.swap([c, col], [piv, col]);
            }
            b.swap(c, piv);
        }
        for r in (c + 1)..k {
            let f = a[[r, c]] / a[[c, c]];
            for col in c..k {
                a[[r, col]] -= f * a[[c, col]];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = Array1::zeros(k);
    for r in (0..k).rev() {
        let s: f64 = ((r + 1)..k).map(|col| a[[r, col]] * x[col]).sum();
        x[r] = (b[r] - s) / a[[r, r]];
    }
    Some(x)
}

/// Exhaustive search over all `3^p` sign patterns (p ≤ 6).
///
/// For each pattern the active coefficients solve
/// `X_BᵀX_B·β_B = X_Bᵀy − (λ/2)·s`; candidates whose signs agree with the
/// pattern and that satisfy the KKT conditions are kept, and the one with the
/// smallest objective is returned.
pub fn solve_signpattern(ds: &StandardizedDataset, lambda: f64) -> Result<Array1<f64>> {
    solve_signpattern_xy(ds.x.view(), ds.y.view(), lambda)
}

pub fn solve_signpattern_xy(x: ArrayView2<f64>, y: ArrayView1<f64>, lambda: f64) -> Result<Array1<f64>> {
    let p = x.ncols();
    if p > 6 {
        return Err(Error::InvalidInput(format!("sign-pattern search needs p <= 6, got {p}")));
    }
    let xty = x.t().dot(&y);
    let tol = 1e-10 * (1.0 + lambda + xty.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    let mut best: Option<(f64, Array1<f64>)> = None;
    for code in 0..3usize.pow(p as u32) {
        let mut signs = vec![0.0; p];
        let mut c = code;
        for s in signs.iter_mut() {
            *s = [0.0, 1.0, -1.0][c % 3];
            c /= 3;
        }
        let active: Vec<usize> = (0..p).filter(|&j| signs[j] != 0.0).collect();
        let mut beta = Array1::zeros(p);
        if !active.is_empty() {
            let xb = x.select(Axis(1), &active);
            let rhs: Array1<f64> = active.iter().map(|&j| xty[j] - lambda / 2.0 * signs[j]).collect();
            let Some(sol) = gauss_solve(xb.t().dot(&xb), rhs) else {
                continue;
            };
            if active.iter().zip(sol.iter()).any(|(&j, b)| b.signum() != signs[j] || *b == 0.0) {
                continue;
            }
            for (&j, b) in active.iter().zip(sol.iter()) {
                beta[j] = *b;
            }
        }
        if kkt_check_xy(x, y, beta.view(), lambda).max() > tol {
            continue;
        }
        let obj = objective(x, y, beta.view(), lambda);
        if best.as_ref().is_none_or(|(b, _)| obj < *b) {
            best = Some((obj, beta));
        }
    }
    best.map(|(_, b)| b).ok_or_else(|| {
        Error::InvalidInput(format!("no sign pattern satisfies the KKT conditions at lambda = {lambda}"))
    })
}

/// Worst `‖β_path(λ) − β_oracle(λ)‖∞` over `lambdas`.
pub fn compare_path_oracle(path: &LassoPath, lambdas: &[f64], tol: f64) -> Result<f64> {
    let x = path.design().x();
    let oracle_tol = (tol * 1e-2).min(DEFAULT_TOL);
    let mut worst = 0.0f64;
    for &lambda in lambdas {
        let ours = path.coefficients_at(lambda)?;
        let theirs = solve_iterative_xy(x, path.y(), lambda, None, oracle_tol, DEFAULT_MAX_ITER)?;
        let gap = (&ours - &theirs.beta).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        worst = worst.max(gap);
    }
    Ok(worst)
}
