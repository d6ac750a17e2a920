use serde::{Deserialize, Serialize};

use super::check_reps;
use super::oracle::mc_risk;
use crate::error::{Error, Result};
use crate::estimators::{by_risk_from_fits, cb_risk_from_fits, fit_draws, Estimator, Variant};
use crate::model::{make_coupled_draws, NormalModel};
use crate::par::try_map_range;
use crate::predictors::{DesignContext, Predictor};
use crate::rng::RngSeed;
use crate::stats::{covariance, dot, mean, sq_dist, sq_norm, std_dev, variance, variance_std_error, OracleEstimate};

/// Replication budget for a bias/variance study of one estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceStudy {
    pub alpha: f64,
    /// Bootstrap draws of the estimator under study.
    pub b: usize,
    /// Number of simulated data vectors.
    pub r_outer: usize,
    /// Draws per data vector used to approximate conditional moments; at least `b`.
    pub b_inner: usize,
    /// Replications for the risk oracles.
    pub r_oracle: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasVarianceReport {
    pub estimator: Estimator,
    pub alpha: f64,
    pub b: usize,
    pub risk: OracleEstimate,
    pub risk_alpha: OracleEstimate,
    /// `E[estimate] - Risk`.
    pub bias: f64,
    pub bias_se: f64,
    pub bias_sq: f64,
    /// Mean conditional variance of the B-draw estimator given the data.
    pub rvar: f64,
    /// Variance of the conditional mean across data vectors.
    pub ivar: f64,
    pub ivar_se: f64,
    /// Variance of the training-error term.
    pub ivar1: f64,
    pub ivar1_se: f64,
    /// Variance of the `(2/sqrt(alpha)) E<omega, g>` term.
    pub ivar2: f64,
    pub ivar2_se: f64,
    /// Twice the covariance of the two terms.
    pub cov12: f64,
    pub cov12_se: f64,
    /// `E[(estimate - Risk)^2]` for the B-draw estimator.
    pub mse: f64,
    pub mse_se: f64,
}

impl BiasVarianceReport {
    pub fn total(&self) -> f64 {
        self.bias_sq + self.rvar + self.ivar
    }
}

struct OuterRow {
    estimate: f64,
    inner_mean: f64,
    inner_var: f64,
    t1: f64,
    t1_var: f64,
    t2: f64,
    t2_var: f64,
    t12_cov: f64,
}

/// Bias, reducible and irreducible variance of CB or BY at one `(alpha, B)`.
///
/// Conditional moments given the data are approximated with `b_inner`
/// draws; variances across data vectors are corrected for that inner noise
/// by subtracting the mean inner variance over `b_inner`.
pub fn bias_variance_report(
    model: &NormalModel,
    g: &Predictor,
    ctx: Option<&DesignContext>,
    study: VarianceStudy,
    estimator: Estimator,
    seed: RngSeed,
) -> Result<BiasVarianceReport> {
    check_reps(study.r_outer, "outer replications")?;
    check_reps(study.b_inner, "inner draws")?;
    if study.b < 2 || study.b > study.b_inner {
        return Err(Error::invalid("need 2 <= B <= inner draws"));
    }
    let variant = match estimator {
        Estimator::Cb => Variant::CbDefault,
        Estimator::By => Variant::ByCovariance,
        other => return Err(Error::invalid(format!("no variance study for {}", other.name()))),
    };
    let (alpha, sigma2) = (study.alpha, model.sigma2());
    let scale = 2.0 / alpha.sqrt();
    let outer = seed.substream(0);

    let rows = try_map_range(study.r_outer, |i| {
        let rep = outer.substream(i as u64);
        let y = model.sample_data(rep.substream(0));
        let draws = make_coupled_draws(&y, sigma2, alpha, study.b_inner, rep.substream(1))?;
        let fits = fit_draws(&draws, g, ctx)?;
        let t2: Vec<f64> = (0..study.b_inner).map(|b| scale * dot(draws.omega(b), fits.get(b))).collect();
        let (per_draw, estimate, t1) = match estimator {
            Estimator::Cb => {
                let full = cb_risk_from_fits(&draws, &fits, sigma2, variant)?;
                let pd = full.per_draw.unwrap();
                let est = mean(&pd[..study.b]);
                let t1: Vec<f64> = (0..study.b_inner).map(|b| sq_dist(&y, fits.get(b))).collect();
                (pd, est, t1)
            }
            _ => {
                let gy = g.predict(&y, ctx)?;
                let full = by_risk_from_fits(&draws, &fits, &gy, sigma2, variant)?;
                let small = by_risk_from_fits(&draws.truncated(study.b), &fits.truncated(study.b), &gy, sigma2, variant)?;
                (full.per_draw.unwrap(), small.value, vec![sq_dist(&y, &gy); study.b_inner])
            }
        };
        Ok::<_, Error>(OuterRow {
            estimate,
            inner_mean: mean(&per_draw),
            inner_var: variance(&per_draw),
            t1: mean(&t1),
            t1_var: variance(&t1),
            t2: mean(&t2),
            t2_var: variance(&t2),
            t12_cov: covariance(&t1, &t2),
        })
    })?;

    let risk = mc_risk(model, g, ctx, 0.0, study.r_oracle, seed.substream(1))?;
    let risk_alpha = mc_risk(model, g, ctx, alpha, study.r_oracle, seed.substream(2))?;
    let bi = study.b_inner as f64;
    let col = |f: &dyn Fn(&OuterRow) -> f64| rows.iter().map(f).collect::<Vec<f64>>();
    let inner_means = col(&|r| r.inner_mean);
    let t1 = col(&|r| r.t1);
    let t2 = col(&|r| r.t2);
    let est = col(&|r| r.estimate);

    let (bias, bias_se) = match estimator {
        Estimator::Cb => {
            let d = crn_bias(model, g, ctx, alpha, study.r_oracle, seed.substream(3))?;
            (d.value, d.std_error)
        }
        _ => {
            let e = OracleEstimate::from_samples(&inner_means);
            (e.value - risk.value, e.std_error.hypot(risk.std_error))
        }
    };

    let ivar = variance(&inner_means) - mean(&col(&|r| r.inner_var)) / bi;
    let ivar1 = variance(&t1) - mean(&col(&|r| r.t1_var)) / bi;
    let ivar2 = variance(&t2) - mean(&col(&|r| r.t2_var)) / bi;
    let cov12 = 2.0 * (covariance(&t1, &t2) - mean(&col(&|r| r.t12_cov)) / bi);
    let (m1, m2) = (mean(&t1), mean(&t2));
    let cross: Vec<f64> = t1.iter().zip(&t2).map(|(a, b)| 2.0 * (a - m1) * (b - m2)).collect();
    let sq_err: Vec<f64> = est.iter().map(|e| (e - risk.value).powi(2)).collect();
    let mse = OracleEstimate::from_samples(&sq_err);

    Ok(BiasVarianceReport {
        estimator,
        alpha,
        b: study.b,
        risk,
        risk_alpha,
        bias,
        bias_se,
        bias_sq: bias * bias,
        rvar: mean(&col(&|r| r.inner_var)) / study.b as f64,
        ivar,
        ivar_se: variance_std_error(&inner_means),
        ivar1,
        ivar1_se: variance_std_error(&t1),
        ivar2,
        ivar2_se: variance_std_error(&t2),
        cov12,
        cov12_se: std_dev(&cross) / (cross.len() as f64).sqrt(),
        mse: mse.value,
        mse_se: mse.std_error,
    })
}

/// `Risk_alpha - Risk` with common random numbers, as a paired mean.
fn crn_bias(
    model: &NormalModel,
    g: &Predictor,
    ctx: Option<&DesignContext>,
    alpha: f64,
    r: usize,
    seed: RngSeed,
) -> Result<OracleEstimate> {
    let curve = crn_losses(model, g, ctx, &[0.0, alpha], r, seed)?;
    let d: Vec<f64> = curve.iter().map(|row| row[1] - row[0]).collect();
    Ok(OracleEstimate::from_samples(&d))
}

fn crn_losses(
    model: &NormalModel,
    g: &Predictor,
    ctx: Option<&DesignContext>,
    alphas: &[f64],
    r: usize,
    seed: RngSeed,
) -> Result<Vec<Vec<f64>>> {
    check_reps(r, "replications")?;
    let sigma = model.sigma();
    try_map_range(r, |i| {
        alphas
            .iter()
            .map(|a| {
                let y = model.sample_scaled(sigma * (1.0 + a).sqrt(), seed.substream(i as u64));
                Ok(sq_dist(model.theta(), &g.predict(&y, ctx)?))
            })
            .collect::<Result<Vec<f64>>>()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasBounds {
    pub alpha: f64,
    /// `Risk_alpha - Risk`, paired across noise levels.
    pub true_bias: OracleEstimate,
    /// `Var ||theta - g(Y_alpha)||^2`
    pub var_alpha: f64,
    pub var_zero: f64,
    /// `(sqrt(n) alpha / sqrt(2)) sqrt(Var ||theta - g(Y_alpha)||^2)`
    pub bound_bd1: f64,
    /// Same with the variance at `alpha = 0`; the leading term of the second bound.
    pub bound_bd2_leading: f64,
    /// `sqrt(n) alpha / sqrt(2)`, the leading-order bound on relative bias.
    pub relative_bound: f64,
}

impl BiasBounds {
    pub fn dominated(&self) -> bool {
        self.true_bias.value.abs() <= self.bound_bd1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasBoundsCurve {
    pub points: Vec<BiasBounds>,
    pub var_se: Vec<f64>,
    /// Whether `Var ||theta - g(Y_t)||^2` looked non-decreasing along the
    /// grid (starting from `t = 0`), which the first bound assumes.
    pub premise_holds: bool,
    /// Grid indices where the estimated variance dropped significantly.
    pub premise_violations: Vec<usize>,
}

pub fn bias_bounds(
    model: &NormalModel,
    g: &Predictor,
    ctx: Option<&DesignContext>,
    alpha: f64,
    r: usize,
    seed: RngSeed,
) -> Result<BiasBounds> {
    Ok(bias_bounds_curve(model, g, ctx, &[alpha], r, seed)?.points[0])
}

/// Bias and its bounds along a sorted grid of positive noise levels, all on
/// common random numbers.
pub fn bias_bounds_curve(
    model: &NormalModel,
    g: &Predictor,
    ctx: Option<&DesignContext>,
    alphas: &[f64],
    r: usize,
    seed: RngSeed,
) -> Result<BiasBoundsCurve> {
    if alphas.is_empty() || alphas.iter().any(|a| !(*a > 0.0)) || alphas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("alpha grid must be positive and increasing"));
    }
    let mut grid = vec![0.0];
    grid.extend_from_slice(alphas);
    let rows = crn_losses(model, g, ctx, &grid, r, seed)?;
    let column = |j: usize| rows.iter().map(|row| row[j]).collect::<Vec<f64>>();
    let l0 = column(0);
    let var_zero = variance(&l0);
    let root_n = (model.n() as f64).sqrt();
    let mut var_se = vec![variance_std_error(&l0)];
    let mut vars = vec![var_zero];
    let mut points = Vec::with_capacity(alphas.len());
    for (j, &a) in alphas.iter().enumerate() {
        let la = column(j + 1);
        let diff: Vec<f64> = la.iter().zip(&l0).map(|(x, y)| x - y).collect();
        let var_alpha = variance(&la);
        vars.push(var_alpha);
        var_se.push(variance_std_error(&la));
        let rel = root_n * a / std::f64::consts::SQRT_2;
        points.push(BiasBounds {
            alpha: a,
            true_bias: OracleEstimate::from_samples(&diff),
            var_alpha,
            var_zero,
            bound_bd1: rel * var_alpha.sqrt(),
            bound_bd2_leading: rel * var_zero.sqrt(),
            relative_bound: rel,
        });
    }
    let premise_violations: Vec<usize> = (1..vars.len())
        .filter(|&j| vars[j] < vars[j - 1] - 3.0 * var_se[j].hypot(var_se[j - 1]))
        .map(|j| j - 1)
        .collect();
    Ok(BiasBoundsCurve { points, var_se: var_se[1..].to_vec(), premise_holds: premise_violations.is_empty(), premise_violations })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RvarLeadingTerms {
    /// `4 sigma2 E||Y - g(Y)||^2 / (B alpha)`
    pub cb_term: OracleEstimate,
    /// `4 sigma2 E||g(Y)||^2 / (B alpha)`
    pub by_term: OracleEstimate,
    /// `4 sigma2 E||g(Y) - g~(Y)||^2 / (B alpha)` for a second rule on shared draws.
    pub diff_term: Option<OracleEstimate>,
}

#[allow(clippy::too_many_arguments)]
pub fn rvar_leading_terms(
    model: &NormalModel,
    g: &Predictor,
    other: Option<&Predictor>,
    ctx: Option<&DesignContext>,
    alpha: f64,
    b: usize,
    r: usize,
    seed: RngSeed,
) -> Result<RvarLeadingTerms> {
    check_reps(r, "replications")?;
    if !(alpha > 0.0) || b == 0 {
        return Err(Error::invalid("need alpha > 0 and B >= 1"));
    }
    let rows = try_map_range(r, |i| {
        let y = model.sample_data(seed.substream(i as u64));
        let gy = g.predict(&y, ctx)?;
        let d = match other {
            Some(h) => sq_dist(&gy, &h.predict(&y, ctx)?),
            None => 0.0,
        };
        Ok::<_, Error>((sq_dist(&y, &gy), sq_norm(&gy), d))
    })?;
    let c = 4.0 * model.sigma2() / (b as f64 * alpha);
    let est = |f: fn(&(f64, f64, f64)) -> f64| OracleEstimate::from_samples(&rows.iter().map(f).collect::<Vec<_>>()).scale(c);
    Ok(RvarLeadingTerms {
        cb_term: est(|r| r.0),
        by_term: est(|r| r.1),
        diff_term: other.map(|_| est(|r| r.2)),
    })
}

/// Measured reducible variance of CB for each `B` in `bs`.
///
/// For every data vector, `groups * B` fresh draws are split into `groups`
/// independent B-draw estimates; their sample variance estimates the
/// conditional variance, which is then averaged over data vectors. Draws are
/// shared across the entries of `bs`.
#[allow(clippy::too_many_arguments)]
pub fn measured_rvar(
    model: &NormalModel,
    g: &Predictor,
    ctx: Option<&DesignContext>,
    alpha: f64,
    bs: &[usize],
    r_outer: usize,
    groups: usize,
    seed: RngSeed,
) -> Result<Vec<OracleEstimate>> {
    check_reps(r_outer, "outer replications")?;
    check_reps(groups, "groups")?;
    let b_max = *bs.iter().max().ok_or_else(|| Error::invalid("empty B grid"))?;
    if bs.contains(&0) {
        return Err(Error::invalid("B must be positive"));
    }
    let rows = try_map_range(r_outer, |i| {
        let rep = seed.substream(i as u64);
        let y = model.sample_data(rep.substream(0));
        let draws = make_coupled_draws(&y, model.sigma2(), alpha, groups * b_max, rep.substream(1))?;
        let pd = cb_risk(&draws, g, ctx, model.sigma2())?;
        Ok::<_, Error>(
            bs.iter()
                .map(|&b| {
                    let means: Vec<f64> = pd[..groups * b].chunks_exact(b).map(mean).collect();
                    variance(&means)
                })
                .collect::<Vec<f64>>(),
        )
    })?;
    Ok((0..bs.len())
        .map(|j| OracleEstimate::from_samples(&rows.iter().map(|r| r[j]).collect::<Vec<_>>()))
        .collect())
}

fn cb_risk(
    draws: &crate::model::CoupledDrawSet,
    g: &Predictor,
    ctx: Option<&DesignContext>,
    sigma2: f64,
) -> Result<Vec<f64>> {
    let fits = fit_draws(draws, g, ctx)?;
    Ok(cb_risk_from_fits(draws, &fits, sigma2, Variant::CbDefault)?.per_draw.unwrap())
}
