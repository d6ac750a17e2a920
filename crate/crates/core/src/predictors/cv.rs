//! Lasso with the penalty chosen by K-fold cross-validation, then refit on
//! the full data. Minimum-error rule; ties go to the larger lambda.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::lasso::{cd_gram, gram, lambda_max, x_vec, xt_vec, LassoOptions};
use crate::error::{check_len, Error, Result};
use crate::rng::RngSeed;

pub const DEFAULT_FOLDS: usize = 10;
pub const DEFAULT_GRID_LEN: usize = 20;
pub const DEFAULT_MIN_RATIO: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LambdaGrid {
    Explicit(Vec<f64>),
    /// `count` log-spaced values from `lambda_max(y)` down to
    /// `min_ratio * lambda_max(y)`, recomputed for every data vector.
    Relative { count: usize, min_ratio: f64 },
}

impl Default for LambdaGrid {
    fn default() -> Self {
        LambdaGrid::Relative { count: DEFAULT_GRID_LEN, min_ratio: DEFAULT_MIN_RATIO }
    }
}

pub fn log_spaced(hi: f64, lo: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![hi];
    }
    let (lh, ll) = (hi.ln(), lo.ln());
    (0..count).map(|i| (lh + (ll - lh) * i as f64 / (count - 1) as f64).exp()).collect()
}

impl LambdaGrid {
    /// Resolved grid, sorted in decreasing order with duplicates removed.
    pub fn resolve(&self, x: &DMatrix<f64>, y: &[f64]) -> Result<Vec<f64>> {
        let mut g = match self {
            LambdaGrid::Explicit(v) => v.clone(),
            LambdaGrid::Relative { count, min_ratio } => {
                if *count == 0 || !(*min_ratio > 0.0 && *min_ratio <= 1.0) {
                    return Err(Error::invalid("relative grid needs count >= 1 and 0 < ratio <= 1"));
                }
                let lmax = lambda_max(x, y).max(f64::MIN_POSITIVE);
                log_spaced(lmax, lmax * min_ratio, *count)
            }
        };
        if g.is_empty() {
            return Err(Error::invalid("lambda grid is empty"));
        }
        if g.iter().any(|l| !(*l >= 0.0)) {
            return Err(Error::invalid("lambda grid entries must be non-negative"));
        }
        g.sort_by(|a, b| b.partial_cmp(a).unwrap());
        g.dedup();
        Ok(g)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FoldAssignment {
    /// Balanced folds from a seeded random permutation of the rows.
    Seeded { folds: usize, seed: u64 },
    Explicit(Vec<usize>),
}

impl Default for FoldAssignment {
    fn default() -> Self {
        FoldAssignment::Seeded { folds: DEFAULT_FOLDS, seed: 0 }
    }
}

impl FoldAssignment {
    /// Fold label of every row.
    pub fn labels(&self, n: usize) -> Result<Vec<usize>> {
        match self {
            FoldAssignment::Explicit(v) => {
                check_len(n, v.len())?;
                Ok(v.clone())
            }
            FoldAssignment::Seeded { folds, seed } => {
                if *folds < 2 || *folds > n {
                    return Err(Error::invalid(format!("fold count {folds} invalid for n = {n}")));
                }
                let mut perm: Vec<usize> = (0..n).collect();
                perm.shuffle(&mut RngSeed::with_stream(*seed, 0xf01d).rng());
                let mut labels = vec![0; n];
                for (pos, &row) in perm.iter().enumerate() {
                    labels[row] = pos % folds;
                }
                Ok(labels)
            }
        }
    }
}

/// Per-fold sufficient statistics for a fixed design and fold assignment.
#[derive(Debug)]
pub struct CvPlan {
    fold_rows: Vec<Vec<usize>>,
    full_gram: DMatrix<f64>,
    train_grams: Vec<DMatrix<f64>>,
}

impl CvPlan {
    pub fn new(x: &DMatrix<f64>, labels: &[usize]) -> Result<Self> {
        let n = x.nrows();
        check_len(n, labels.len())?;
        let k = labels.iter().max().map_or(0, |m| m + 1);
        let mut fold_rows = vec![Vec::new(); k];
        for (i, &f) in labels.iter().enumerate() {
            fold_rows[f].push(i);
        }
        if let Some(empty) = fold_rows.iter().position(|r| r.is_empty()) {
            return Err(Error::EmptyFold(empty));
        }
        if k < 2 {
            return Err(Error::invalid("cross-validation needs at least two folds"));
        }
        let full_gram = gram(x);
        let train_grams = fold_rows
            .iter()
            .map(|rows| {
                let held = x.select_rows(rows.iter());
                &full_gram - held.tr_mul(&held)
            })
            .collect();
        Ok(CvPlan { fold_rows, full_gram, train_grams })
    }

    pub fn n_folds(&self) -> usize {
        self.fold_rows.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvFit {
    pub lambda: f64,
    pub beta: Vec<f64>,
    pub grid: Vec<f64>,
    /// Mean held-out squared error for each grid entry.
    pub cv_error: Vec<f64>,
}

pub fn solve_lasso_cv(
    x: &DMatrix<f64>,
    y: &[f64],
    folds: &FoldAssignment,
    grid: &LambdaGrid,
) -> Result<CvFit> {
    let labels = folds.labels(x.nrows())?;
    let plan = CvPlan::new(x, &labels)?;
    solve_lasso_cv_planned(x, y, &plan, grid)
}

pub(crate) fn solve_lasso_cv_planned(
    x: &DMatrix<f64>,
    y: &[f64],
    plan: &CvPlan,
    grid: &LambdaGrid,
) -> Result<CvFit> {
    let (n, p) = (x.nrows(), x.ncols());
    check_len(n, y.len())?;
    let grid = grid.resolve(x, y)?;
    let opts = LassoOptions::default();
    let xty = xt_vec(x, y);
    let mut sse = vec![0.0; grid.len()];

    for (rows, tg) in plan.fold_rows.iter().zip(&plan.train_grams) {
        let mut xty_train = xty.clone();
        for &i in rows {
            for j in 0..p {
                xty_train[j] -= x[(i, j)] * y[i];
            }
        }
        let m = n - rows.len();
        let mut beta = vec![0.0; p];
        for (g, &lambda) in grid.iter().enumerate() {
            cd_gram(tg, &xty_train, m, lambda, &mut beta, opts)?;
            for &i in rows {
                let mut pred = 0.0;
                for (j, &b) in beta.iter().enumerate() {
                    if b != 0.0 {
                        pred += x[(i, j)] * b;
                    }
                }
                sse[g] += (y[i] - pred) * (y[i] - pred);
            }
        }
    }
    let cv_error: Vec<f64> = sse.iter().map(|s| s / n as f64).collect();
    // grid is decreasing, so the first minimiser is the largest lambda
    let mut best = 0;
    for g in 1..grid.len() {
        if cv_error[g] < cv_error[best] {
            best = g;
        }
    }
    let lambda = grid[best];
    let mut beta = vec![0.0; p];
    cd_gram(&plan.full_gram, &xty, n, lambda, &mut beta, opts)?;
    Ok(CvFit { lambda, beta, grid, cv_error })
}

pub(crate) fn fitted(x: &DMatrix<f64>, fit: &CvFit) -> Vec<f64> {
    x_vec(x, &fit.beta)
}
