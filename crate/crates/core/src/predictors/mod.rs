//! Prediction rules `g: R^n -> R^n` and their divergences.

pub mod cv;
pub mod fused;
pub mod lasso;
pub mod stepwise;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub use cv::{solve_lasso_cv, CvFit, FoldAssignment, LambdaGrid};
pub use fused::{count_groups, solve_fused_lasso_1d};
pub use lasso::{kkt_residual, lambda_max, solve_lasso, KKT_TOL};
pub use stepwise::{solve_forward_stepwise, StepwiseFit};

use crate::error::{check_len, Error, Result};
use crate::linalg::SpdFactor;
use cv::CvPlan;
use lasso::{cd_gram, x_vec, xt_vec, LassoOptions};

/// Regression design shared by the regression-type predictors.
///
/// Holds lazily built, thread-safe caches (Gram matrix, ridge smoothers,
/// cross-validation fold statistics) so repeated fits in a Monte Carlo loop
/// do not redo the design-only work.
pub struct DesignContext {
    x: DMatrix<f64>,
    beta_true: Option<Vec<f64>>,
    gram: OnceLock<DMatrix<f64>>,
    ridge: Mutex<HashMap<u64, Arc<DMatrix<f64>>>>,
    cv_plans: Mutex<HashMap<FoldAssignment, Arc<CvPlan>>>,
}

impl fmt::Debug for DesignContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DesignContext")
            .field("n", &self.n())
            .field("p", &self.p())
            .field("has_beta_true", &self.beta_true.is_some())
            .finish()
    }
}

impl DesignContext {
    pub fn new(x: DMatrix<f64>, beta_true: Option<Vec<f64>>) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::invalid("design matrix must be non-empty"));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("design matrix".into()));
        }
        if let Some(b) = &beta_true {
            check_len(x.ncols(), b.len())?;
        }
        Ok(DesignContext {
            x,
            beta_true,
            gram: OnceLock::new(),
            ridge: Mutex::new(HashMap::new()),
            cv_plans: Mutex::new(HashMap::new()),
        })
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn beta_true(&self) -> Option<&[f64]> {
        self.beta_true.as_deref()
    }

    /// `X beta_true`, when the truth is known.
    pub fn theta_true(&self) -> Option<Vec<f64>> {
        self.beta_true.as_ref().map(|b| x_vec(&self.x, b))
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        self.gram.get_or_init(|| lasso::gram(&self.x))
    }

    /// Ridge hat matrix `X (X^T X + n lambda I)^{-1} X^T`.
    pub fn ridge_smoother(&self, lambda: f64) -> Result<Arc<DMatrix<f64>>> {
        if let Some(s) = self.ridge.lock().unwrap().get(&lambda.to_bits()) {
            return Ok(s.clone());
        }
        let s = Arc::new(ridge_smoother(&self.x, lambda)?);
        self.ridge.lock().unwrap().insert(lambda.to_bits(), s.clone());
        Ok(s)
    }

    fn cv_plan(&self, folds: &FoldAssignment) -> Result<Arc<CvPlan>> {
        if let Some(p) = self.cv_plans.lock().unwrap().get(folds) {
            return Ok(p.clone());
        }
        let labels = folds.labels(self.n())?;
        let plan = Arc::new(CvPlan::new(&self.x, &labels)?);
        self.cv_plans.lock().unwrap().insert(folds.clone(), plan.clone());
        Ok(plan)
    }
}

fn ridge_smoother(x: &DMatrix<f64>, lambda: f64) -> Result<DMatrix<f64>> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::invalid(format!("ridge lambda must be non-negative, got {lambda}")));
    }
    let (n, p) = (x.nrows(), x.ncols());
    let shift = n as f64 * lambda;
    if p < n {
        let mut m = x.tr_mul(x);
        m.iter_mut().step_by(p + 1).for_each(|d| *d += shift);
        let f = SpdFactor::new(&m)?;
        let w = f.solve_matrix(&x.transpose());
        Ok(x * w)
    } else {
        // X (X^T X + c I)^{-1} X^T = K (K + c I)^{-1} with K = X X^T
        let k = x * x.transpose();
        let mut m = k.clone();
        m.iter_mut().step_by(n + 1).for_each(|d| *d += shift);
        let f = SpdFactor::new(&m)?;
        let s = f.solve_matrix(&k);
        // symmetrise away roundoff
        Ok((&s + s.transpose()) * 0.5)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoCvSpec {
    pub folds: FoldAssignment,
    pub grid: LambdaGrid,
}

impl Default for LassoCvSpec {
    fn default() -> Self {
        LassoCvSpec { folds: FoldAssignment::default(), grid: LambdaGrid::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Predictor {
    Identity,
    Zero,
    LinearSmoother(Arc<DMatrix<f64>>),
    Ridge { lambda: f64 },
    Lasso { lambda: f64 },
    LassoCv(LassoCvSpec),
    ForwardStepwise { k: usize },
    SoftThreshold { t: f64 },
    HardThreshold { t: f64 },
    FusedLasso1d { lambda: f64 },
}

/// A fitted value together with its divergence when one is available.
#[derive(Debug, Clone, PartialEq)]
pub struct Fit {
    pub fitted: Vec<f64>,
    pub divergence: Option<f64>,
}

pub fn soft_threshold(y: &[f64], t: f64) -> Vec<f64> {
    y.iter()
        .map(|&v| {
            if v > t {
                v - t
            } else if v < -t {
                v + t
            } else {
                0.0
            }
        })
        .collect()
}

pub fn hard_threshold(y: &[f64], t: f64) -> Vec<f64> {
    y.iter().map(|&v| if v.abs() > t { v } else { 0.0 }).collect()
}

fn exceed_count(y: &[f64], t: f64) -> usize {
    y.iter().filter(|v| v.abs() > t).count()
}

impl Predictor {
    pub fn kind(&self) -> &'static str {
        match self {
            Predictor::Identity => "identity",
            Predictor::Zero => "zero",
            Predictor::LinearSmoother(_) => "linear_smoother",
            Predictor::Ridge { .. } => "ridge",
            Predictor::Lasso { .. } => "lasso",
            Predictor::LassoCv(_) => "lasso_cv",
            Predictor::ForwardStepwise { .. } => "forward_stepwise",
            Predictor::SoftThreshold { .. } => "soft_threshold",
            Predictor::HardThreshold { .. } => "hard_threshold",
            Predictor::FusedLasso1d { .. } => "fused_lasso_1d",
        }
    }

    pub fn needs_design(&self) -> bool {
        matches!(
            self,
            Predictor::Ridge { .. }
                | Predictor::Lasso { .. }
                | Predictor::LassoCv(_)
                | Predictor::ForwardStepwise { .. }
        )
    }

    pub fn has_analytic_divergence(&self) -> bool {
        !matches!(self, Predictor::LassoCv(_) | Predictor::ForwardStepwise { .. })
    }

    /// Copy of a cross-validated rule with a different fold seed; other kinds
    /// are returned unchanged.
    pub fn with_fold_seed(&self, seed: u64) -> Predictor {
        match self {
            Predictor::LassoCv(spec) => match spec.folds {
                FoldAssignment::Seeded { folds, .. } => Predictor::LassoCv(LassoCvSpec {
                    folds: FoldAssignment::Seeded { folds, seed },
                    grid: spec.grid.clone(),
                }),
                FoldAssignment::Explicit(_) => self.clone(),
            },
            _ => self.clone(),
        }
    }

    fn design<'a>(&self, ctx: Option<&'a DesignContext>, n: usize) -> Result<&'a DesignContext> {
        let ctx = ctx.ok_or_else(|| Error::MissingContext(self.to_string()))?;
        check_len(ctx.n(), n)?;
        Ok(ctx)
    }

    pub fn fit(&self, y: &[f64], ctx: Option<&DesignContext>) -> Result<Fit> {
        let n = y.len();
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("data vector".into()));
        }
        let fit = match self {
            Predictor::Identity => Fit { fitted: y.to_vec(), divergence: Some(n as f64) },
            Predictor::Zero => Fit { fitted: vec![0.0; n], divergence: Some(0.0) },
            Predictor::LinearSmoother(s) => {
                if s.nrows() != n || s.ncols() != n {
                    return Err(Error::DimensionMismatch { expected: n, found: s.nrows() });
                }
                Fit { fitted: mat_vec(s, y), divergence: Some(s.trace()) }
            }
            Predictor::Ridge { lambda } => {
                let s = self.design(ctx, n)?.ridge_smoother(*lambda)?;
                Fit { fitted: mat_vec(&s, y), divergence: Some(s.trace()) }
            }
            Predictor::Lasso { lambda } => {
                let ctx = self.design(ctx, n)?;
                let beta = lasso_on_design(ctx, y, *lambda)?;
                let support = beta.iter().filter(|b| **b != 0.0).count();
                Fit { fitted: x_vec(ctx.x(), &beta), divergence: Some(support as f64) }
            }
            Predictor::LassoCv(spec) => {
                let ctx = self.design(ctx, n)?;
                let plan = ctx.cv_plan(&spec.folds)?;
                let fit = cv::solve_lasso_cv_planned(ctx.x(), y, &plan, &spec.grid)?;
                Fit { fitted: cv::fitted(ctx.x(), &fit), divergence: None }
            }
            Predictor::ForwardStepwise { k } => {
                let ctx = self.design(ctx, n)?;
                let fit = solve_forward_stepwise(ctx.x(), y, *k)?;
                Fit { fitted: fit.fitted, divergence: None }
            }
            Predictor::SoftThreshold { t } => Fit {
                fitted: soft_threshold(y, *t),
                divergence: Some(exceed_count(y, *t) as f64),
            },
            Predictor::HardThreshold { t } => Fit {
                fitted: hard_threshold(y, *t),
                divergence: Some(exceed_count(y, *t) as f64),
            },
            Predictor::FusedLasso1d { lambda } => {
                let fitted = solve_fused_lasso_1d(y, *lambda)?;
                let groups = count_groups(&fitted);
                Fit { fitted, divergence: Some(groups as f64) }
            }
        };
        Ok(fit)
    }

    pub fn predict(&self, y: &[f64], ctx: Option<&DesignContext>) -> Result<Vec<f64>> {
        match self {
            Predictor::Identity => Ok(y.to_vec()),
            Predictor::Zero => Ok(vec![0.0; y.len()]),
            Predictor::SoftThreshold { t } => Ok(soft_threshold(y, *t)),
            Predictor::HardThreshold { t } => Ok(hard_threshold(y, *t)),
            _ => Ok(self.fit(y, ctx)?.fitted),
        }
    }

    /// Divergence of `g` at `y`. For the hard threshold this is the count of
    /// kept coordinates, which ignores the jumps and so does not give an
    /// unbiased SURE.
    pub fn divergence(&self, y: &[f64], ctx: Option<&DesignContext>) -> Result<f64> {
        if !self.has_analytic_divergence() {
            return Err(Error::UnsupportedDivergence(self.to_string()));
        }
        match self {
            Predictor::Identity => Ok(y.len() as f64),
            Predictor::Zero => Ok(0.0),
            Predictor::SoftThreshold { t } | Predictor::HardThreshold { t } => {
                Ok(exceed_count(y, *t) as f64)
            }
            _ => Ok(self.fit(y, ctx)?.divergence.expect("analytic divergence")),
        }
    }
}

fn lasso_on_design(ctx: &DesignContext, y: &[f64], lambda: f64) -> Result<Vec<f64>> {
    if !(lambda >= 0.0) {
        return Err(Error::invalid(format!("lambda must be non-negative, got {lambda}")));
    }
    let opts = LassoOptions::default();
    let xty = xt_vec(ctx.x(), y);
    let mut beta = vec![0.0; ctx.p()];
    cd_gram(ctx.gram(), &xty, ctx.n(), lambda, &mut beta, opts)?;
    let res = kkt_residual(ctx.x(), y, &beta, lambda);
    if res > KKT_TOL {
        return Err(Error::NonConvergence { iterations: opts.max_sweeps, residual: res });
    }
    Ok(beta)
}

pub(crate) fn mat_vec(m: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    x_vec(m, v)
}

impl fmt::Display for Predictor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Predictor::Identity => write!(f, "identity"),
            Predictor::Zero => write!(f, "zero"),
            Predictor::LinearSmoother(s) => write!(f, "smoother[{}]", s.nrows()),
            Predictor::Ridge { lambda } => write!(f, "ridge:{lambda}"),
            Predictor::Lasso { lambda } => write!(f, "lasso:{lambda}"),
            Predictor::LassoCv(spec) => match &spec.folds {
                FoldAssignment::Seeded { folds, seed: 0 } => write!(f, "lasso_cv:{folds}"),
                FoldAssignment::Seeded { folds, seed } => write!(f, "lasso_cv:{folds}:{seed}"),
                FoldAssignment::Explicit(_) => write!(f, "lasso_cv:explicit"),
            },
            Predictor::ForwardStepwise { k } => write!(f, "stepwise:{k}"),
            Predictor::SoftThreshold { t } => write!(f, "soft:{t}"),
            Predictor::HardThreshold { t } => write!(f, "hard:{t}"),
            Predictor::FusedLasso1d { lambda } => write!(f, "fused:{lambda}"),
        }
    }
}

impl FromStr for Predictor {
    type Err = Error;

    /// Parses `identity`, `zero`, `ridge:L`, `lasso:L`, `lasso_cv[:K[:SEED]]`,
    /// `stepwise:K`, `soft:T`, `hard:T`, `fused:L`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let mut parts = s.split(':');
        let head = parts.next().unwrap_or_default();
        let args: Vec<&str> = parts.collect();
        let bad = || Error::Config(format!("cannot parse predictor spec `{s}`"));
        let real = |i: usize| -> Result<f64> {
            let v: f64 = args.get(i).ok_or_else(bad)?.parse().map_err(|_| bad())?;
            if v.is_finite() && v >= 0.0 {
                Ok(v)
            } else {
                Err(bad())
            }
        };
        let count = |i: usize| -> Result<usize> { args.get(i).ok_or_else(bad)?.parse().map_err(|_| bad()) };
        let arity = |k: usize| if args.len() == k { Ok(()) } else { Err(bad()) };
        match head {
            "identity" => arity(0).map(|_| Predictor::Identity),
            "zero" => arity(0).map(|_| Predictor::Zero),
            "ridge" => arity(1).and_then(|_| Ok(Predictor::Ridge { lambda: real(0)? })),
            "lasso" => arity(1).and_then(|_| Ok(Predictor::Lasso { lambda: real(0)? })),
            "stepwise" => arity(1).and_then(|_| Ok(Predictor::ForwardStepwise { k: count(0)? })),
            "soft" => arity(1).and_then(|_| Ok(Predictor::SoftThreshold { t: real(0)? })),
            "hard" => arity(1).and_then(|_| Ok(Predictor::HardThreshold { t: real(0)? })),
            "fused" => arity(1).and_then(|_| Ok(Predictor::FusedLasso1d { lambda: real(0)? })),
            "lasso_cv" => {
                if args.len() > 2 {
                    return Err(bad());
                }
                let folds = if args.is_empty() { cv::DEFAULT_FOLDS } else { count(0)? };
                let seed = if args.len() == 2 { args[1].parse().map_err(|_| bad())? } else { 0 };
                Ok(Predictor::LassoCv(LassoCvSpec {
                    folds: FoldAssignment::Seeded { folds, seed },
                    grid: LambdaGrid::default(),
                }))
            }
            _ => Err(bad()),
        }
    }
}

impl Serialize for Predictor {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Predictor {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let spec = String::deserialize(d)?;
        spec.parse().map_err(serde::de::Error::custom)
    }
}
