//! Lasso by cyclic coordinate descent with covariance updates.
//!
//! Objective: `(1/(2m)) ||y - X beta||^2 + lambda ||beta||_1` where `m` is the
//! number of rows. No intercept and no column standardisation.

use nalgebra::DMatrix;

use crate::error::{check_len, Error, Result};

/// KKT residual accepted by [`solve_lasso`].
pub const KKT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_SWEEPS: usize = 100_000;
/// Internal stopping tolerance on the per-coordinate subgradient violation.
const CD_TOL: f64 = 1e-10;
const SIGN_SOLVE_EVERY: usize = 10;
const SIGN_SOLVE_ROUNDS: usize = 4;

#[derive(Debug, Clone, Copy)]
pub struct LassoOptions {
    pub max_sweeps: usize,
    pub tol: f64,
}

impl Default for LassoOptions {
    fn default() -> Self {
        LassoOptions { max_sweeps: DEFAULT_MAX_SWEEPS, tol: CD_TOL }
    }
}

fn soft(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

pub fn xt_vec(x: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    let n = x.nrows();
    x.as_slice().chunks_exact(n).map(|col| col.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

pub fn x_vec(x: &DMatrix<f64>, beta: &[f64]) -> Vec<f64> {
    let n = x.nrows();
    let mut out = vec![0.0; n];
    for (col, &b) in x.as_slice().chunks_exact(n).zip(beta) {
        if b != 0.0 {
            out.iter_mut().zip(col).for_each(|(o, c)| *o += b * c);
        }
    }
    out
}

/// Smallest lambda for which the zero vector is optimal, `max_j |X_j^T y| / n`.
pub fn lambda_max(x: &DMatrix<f64>, y: &[f64]) -> f64 {
    let n = x.nrows() as f64;
    xt_vec(x, y).iter().fold(0.0_f64, |m, v| m.max(v.abs())) / n
}

/// Max-norm of the subgradient optimality residual, computed from scratch.
pub fn kkt_residual(x: &DMatrix<f64>, y: &[f64], beta: &[f64], lambda: f64) -> f64 {
    let n = x.nrows() as f64;
    let fitted = x_vec(x, beta);
    let resid: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
    let grad = xt_vec(x, &resid);
    grad.iter()
        .zip(beta)
        .map(|(g, &b)| {
            let g = g / n;
            if b > 0.0 {
                (g - lambda).abs()
            } else if b < 0.0 {
                (g + lambda).abs()
            } else {
                (g.abs() - lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// Coordinate descent on a precomputed (unscaled) Gram matrix `X^T X` and
/// `X^T y` over `m` rows. `beta` is used as a warm start and overwritten.
/// Returns the number of full sweeps performed.
pub fn cd_gram(
    gram: &DMatrix<f64>,
    xty: &[f64],
    m: usize,
    lambda: f64,
    beta: &mut [f64],
    opts: LassoOptions,
) -> Result<usize> {
    let p = xty.len();
    let mf = m as f64;
    let pen = mf * lambda;
    let g = gram.as_slice();
    let mut q = vec![0.0; p];
    let mut last_viol = f64::INFINITY;

    for sweep in 0..opts.max_sweeps {
        // refresh q = G beta to keep incremental drift out of the KKT check
        q.iter_mut().for_each(|v| *v = 0.0);
        for (j, &bj) in beta.iter().enumerate() {
            if bj != 0.0 {
                q.iter_mut().zip(&g[j * p..(j + 1) * p]).for_each(|(qi, gij)| *qi += bj * gij);
            }
        }

        let mut max_viol = 0.0_f64;
        for j in 0..p {
            let gjj = g[j * p + j];
            if gjj <= 0.0 {
                beta[j] = 0.0;
                continue;
            }
            let r = xty[j] - q[j];
            let bj = beta[j];
            let viol = if bj > 0.0 {
                (r - pen).abs()
            } else if bj < 0.0 {
                (r + pen).abs()
            } else {
                (r.abs() - pen).max(0.0)
            };
            max_viol = max_viol.max(viol / mf);
            let new = soft(r + gjj * bj, pen) / gjj;
            if new != bj {
                let d = new - bj;
                q.iter_mut().zip(&g[j * p..(j + 1) * p]).for_each(|(qi, gij)| *qi += d * gij);
                beta[j] = new;
            }
        }
        last_viol = max_viol;
        if max_viol <= opts.tol {
            return Ok(sweep + 1);
        }

        // iterate on the active set until it settles, trying the exact
        // solve on the current signs every few passes
        let mut active: Vec<usize> = (0..p).filter(|&j| beta[j] != 0.0).collect();
        for pass in 0..opts.max_sweeps {
            if pass % SIGN_SOLVE_EVERY == 0 {
                active.retain(|&j| beta[j] != 0.0);
                if solve_on_signs(g, p, xty, pen, beta, &mut q, &active) {
                    break;
                }
            }
            let mut max_step = 0.0_f64;
            for &j in &active {
                let gjj = g[j * p + j];
                let bj = beta[j];
                let r = xty[j] - q[j];
                let new = soft(r + gjj * bj, pen) / gjj;
                if new != bj {
                    let d = new - bj;
                    q.iter_mut().zip(&g[j * p..(j + 1) * p]).for_each(|(qi, gij)| *qi += d * gij);
                    beta[j] = new;
                    max_step = max_step.max(d.abs() * gjj / mf);
                }
            }
            if max_step <= 0.1 * opts.tol {
                break;
            }
        }
    }
    Err(Error::NonConvergence { iterations: opts.max_sweeps, residual: last_viol })
}

/// Feature-sign step on the active set: solve the stationarity equations
/// `G_AA b = X_A^T y - pen * sign(beta_A)` for the current signs, move from
/// `beta` towards `b` until the first coordinate reaches zero, drop it and
/// repeat. Every move lowers the objective. Returns true once the solution
/// keeps all signs; `q = G beta` is kept in sync whenever `beta` changes.
///
/// On nearly collinear active sets coordinate descent converges very slowly
/// while this step is exact once the signs are right.
fn solve_on_signs(g: &[f64], p: usize, xty: &[f64], pen: f64, beta: &mut [f64], q: &mut [f64], active: &[usize]) -> bool {
    let mut set: Vec<usize> = active.iter().copied().filter(|&j| beta[j] != 0.0).collect();
    let mut moved = false;
    let mut rounds = 0;
    let done = loop {
        let k = set.len();
        rounds += 1;
        if k == 0 || rounds > SIGN_SOLVE_ROUNDS {
            break false;
        }
        let gaa = DMatrix::from_fn(k, k, |a, b| g[set[b] * p + set[a]]);
        let Some(chol) = gaa.cholesky() else {
            break false;
        };
        let rhs = nalgebra::DVector::from_iterator(k, set.iter().map(|&j| xty[j] - pen * beta[j].signum()));
        let sol = chol.solve(&rhs);
        if sol.iter().any(|v| !v.is_finite()) {
            break false;
        }
        // largest step in [0, 1] keeping every sign
        let mut step = 1.0;
        let mut blocking = None;
        for (a, &j) in set.iter().enumerate() {
            if sol[a].signum() != beta[j].signum() || sol[a] == 0.0 {
                let t = beta[j] / (beta[j] - sol[a]);
                if t < step {
                    step = t;
                    blocking = Some(a);
                }
            }
        }
        for (a, &j) in set.iter().enumerate() {
            beta[j] += step * (sol[a] - beta[j]);
        }
        moved = true;
        match blocking {
            None => break true,
            Some(a) => {
                beta[set[a]] = 0.0;
                set.remove(a);
            }
        }
    };
    if moved {
        q.iter_mut().for_each(|v| *v = 0.0);
        for (j, &bj) in beta.iter().enumerate() {
            if bj != 0.0 {
                q.iter_mut().zip(&g[j * p..(j + 1) * p]).for_each(|(qi, gij)| *qi += bj * gij);
            }
        }
    }
    done
}

pub fn gram(x: &DMatrix<f64>) -> DMatrix<f64> {
    x.tr_mul(x)
}

/// Solve the lasso and certify the KKT conditions to [`KKT_TOL`].
pub fn solve_lasso(x: &DMatrix<f64>, y: &[f64], lambda: f64) -> Result<Vec<f64>> {
    solve_lasso_with(x, y, lambda, LassoOptions::default())
}

pub fn solve_lasso_with(
    x: &DMatrix<f64>,
    y: &[f64],
    lambda: f64,
    opts: LassoOptions,
) -> Result<Vec<f64>> {
    if !(lambda >= 0.0) {
        return Err(Error::invalid(format!("lambda must be non-negative, got {lambda}")));
    }
    check_len(x.nrows(), y.len())?;
    let g = gram(x);
    let xty = xt_vec(x, y);
    let mut beta = vec![0.0; x.ncols()];
    cd_gram(&g, &xty, x.nrows(), lambda, &mut beta, opts)?;
    let res = kkt_residual(x, y, &beta, lambda);
    if res > KKT_TOL {
        return Err(Error::NonConvergence { iterations: opts.max_sweeps, residual: res });
    }
    Ok(beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{standard_normal_vec, RngSeed};

    fn random_design(n: usize, p: usize, seed: u64) -> (DMatrix<f64>, Vec<f64>) {
        let mut rng = RngSeed::new(seed).rng();
        let x = DMatrix::from_column_slice(n, p, &standard_normal_vec(&mut rng, n * p));
        let y = standard_normal_vec(&mut rng, n);
        (x, y)
    }

    #[test]
    fn zero_lambda_recovers_least_squares() {
        let (x, y) = random_design(40, 6, 1);
        let beta = solve_lasso(&x, &y, 0.0).unwrap();
        let ls = (x.transpose() * &x)
            .cholesky()
            .unwrap()
            .solve(&(x.transpose() * nalgebra::DVector::from_column_slice(&y)));
        for j in 0..6 {
            assert!((beta[j] - ls[j]).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_above_lambda_max() {
        let (x, y) = random_design(30, 50, 2);
        let lmax = lambda_max(&x, &y);
        assert!(solve_lasso(&x, &y, lmax).unwrap().iter().all(|&b| b == 0.0));
        assert!(solve_lasso(&x, &y, 2.0 * lmax).unwrap().iter().all(|&b| b == 0.0));
        assert!(solve_lasso(&x, &y, 0.99 * lmax).unwrap().iter().any(|&b| b != 0.0));
    }

    #[test]
    fn identity_design_is_soft_thresholding() {
        // (1/(2n)) sum (y_i - b_i)^2 + lambda |b_i|  =>  b_i = soft(y_i, n lambda)
        let n = 8;
        let x = DMatrix::identity(n, n);
        let y = vec![3.0, -2.0, 0.5, 1.2, -0.1, 4.0, -3.3, 0.0];
        let lambda = 0.15;
        let beta = solve_lasso(&x, &y, lambda).unwrap();
        for i in 0..n {
            let t = n as f64 * lambda;
            let expected = y[i].signum() * (y[i].abs() - t).max(0.0);
            assert!((beta[i] - expected).abs() < 1e-10, "{i}: {} vs {expected}", beta[i]);
        }
    }

    #[test]
    fn kkt_certified_on_wide_problem() {
        let (x, y) = random_design(50, 120, 3);
        for &frac in &[0.5, 0.1, 0.02] {
            let lambda = frac * lambda_max(&x, &y);
            let beta = solve_lasso(&x, &y, lambda).unwrap();
            assert!(kkt_residual(&x, &y, &beta, lambda) <= KKT_TOL);
        }
    }

    #[test]
    fn negative_lambda_rejected() {
        let (x, y) = random_design(5, 3, 4);
        assert!(solve_lasso(&x, &y, -1.0).is_err());
    }
}
