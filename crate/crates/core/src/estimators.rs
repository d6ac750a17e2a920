//! Risk and degrees-of-freedom estimators.
//!
//! All bootstrap estimators are written as a mean of per-draw values, so that
//! `value == mean(per_draw)` and paired comparisons can share draws. The
//! prediction rule is evaluated once per draw ([`fit_draws`]) and the fits
//! can be reused by several estimators.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg::{trace_inv_times, SpdFactor};
use crate::model::{make_structured_coupled_draws, CoupledDrawSet};
use crate::par::try_map_range;
use crate::predictors::{DesignContext, Predictor};
use crate::rng::RngSeed;
use crate::stats::{dot, mean, sq_dist, sq_norm};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Cb,
    By,
    Efron,
    Sure,
    CbStructured,
}

impl Estimator {
    pub fn name(&self) -> &'static str {
        match self {
            Estimator::Cb => "CB",
            Estimator::By => "BY",
            Estimator::Efron => "Efron",
            Estimator::Sure => "SURE",
            Estimator::CbStructured => "CB_structured",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// `||Y† - g(Y*)||^2 - ||omega||^2 / alpha - n sigma2`
    CbDefault,
    /// `||Y† - g(Y*)||^2 + ||Y*||^2 - ||Y†||^2 - n (1 + alpha) sigma2`
    CbRawPair,
    /// `||Y† - g(Y*)||^2 + n sigma2 (alpha - 1/alpha) - n (1 + alpha) sigma2`
    CbExactMean,
    ByCovariance,
    ByBreimanIncrement,
    ByYePerCoordinate,
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::CbDefault => "cb_default",
            Variant::CbRawPair => "cb_raw_pair",
            Variant::CbExactMean => "cb_exact_mean",
            Variant::ByCovariance => "by_covariance",
            Variant::ByBreimanIncrement => "by_breiman_increment",
            Variant::ByYePerCoordinate => "by_ye_per_coordinate",
        }
    }

    pub fn is_cb(&self) -> bool {
        matches!(self, Variant::CbDefault | Variant::CbRawPair | Variant::CbExactMean)
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            Variant::CbDefault,
            Variant::CbRawPair,
            Variant::CbExactMean,
            Variant::ByCovariance,
            Variant::ByBreimanIncrement,
            Variant::ByYePerCoordinate,
        ]
        .into_iter()
        .find(|v| v.name() == s)
        .ok_or_else(|| Error::Config(format!("unknown estimator variant `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskEstimate {
    pub estimator: Estimator,
    pub value: f64,
    pub per_draw: Option<Vec<f64>>,
    pub alpha: f64,
    pub b: usize,
    pub variant: Option<Variant>,
}

impl RiskEstimate {
    fn from_draws(estimator: Estimator, per_draw: Vec<f64>, alpha: f64, variant: Option<Variant>) -> Self {
        RiskEstimate {
            estimator,
            value: mean(&per_draw),
            b: per_draw.len(),
            per_draw: Some(per_draw),
            alpha,
            variant,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DfMethod {
    CbDf,
    YeDf,
    YePerCoordinate,
    SureDivergence,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DfEstimate {
    pub value: f64,
    pub method: DfMethod,
    pub alpha: f64,
}

/// `g(Y*^b)` for every draw, row-major `B x n`.
#[derive(Debug, Clone, PartialEq)]
pub struct DrawFits {
    n: usize,
    fits: Vec<f64>,
}

impl DrawFits {
    pub fn get(&self, b: usize) -> &[f64] {
        &self.fits[b * self.n..(b + 1) * self.n]
    }

    pub fn n_draws(&self) -> usize {
        self.fits.len() / self.n
    }

    /// Fits of the first `b` draws, matching [`CoupledDrawSet::truncated`].
    pub fn truncated(&self, b: usize) -> DrawFits {
        let b = b.min(self.n_draws());
        DrawFits { n: self.n, fits: self.fits[..b * self.n].to_vec() }
    }
}

pub fn fit_draws(draws: &CoupledDrawSet, g: &Predictor, ctx: Option<&DesignContext>) -> Result<DrawFits> {
    let rows = try_map_range(draws.n_draws(), |b| g.predict(draws.ystar(b), ctx))?;
    Ok(DrawFits { n: draws.n(), fits: rows.concat() })
}

fn check_fits(draws: &CoupledDrawSet, fits: &DrawFits) -> Result<()> {
    check_len(draws.n(), fits.n)?;
    check_len(draws.n_draws(), fits.n_draws())
}

fn check_sigma2(sigma2: f64) -> Result<()> {
    if sigma2 > 0.0 && sigma2.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("sigma2 must be positive, got {sigma2}")))
    }
}

/// Coupled bootstrap estimate of the noise-elevated risk.
pub fn cb_risk(
    draws: &CoupledDrawSet,
    g: &Predictor,
    ctx: Option<&DesignContext>,
    sigma2: f64,
    variant: Variant,
) -> Result<RiskEstimate> {
    let fits = fit_draws(draws, g, ctx)?;
    cb_risk_from_fits(draws, &fits, sigma2, variant)
}

pub fn cb_risk_from_fits(
    draws: &CoupledDrawSet,
    fits: &DrawFits,
    sigma2: f64,
    variant: Variant,
) -> Result<RiskEstimate> {
    check_sigma2(sigma2)?;
    check_fits(draws, fits)?;
    let (n, a) = (draws.n() as f64, draws.alpha());
    let per_draw = (0..draws.n_draws())
        .map(|b| {
            let test = sq_dist(draws.ydagger(b), fits.get(b));
            match variant {
                Variant::CbDefault => test - sq_norm(draws.omega(b)) / a - n * sigma2,
                Variant::CbRawPair => {
                    test + sq_norm(draws.ystar(b)) - sq_norm(draws.ydagger(b)) - n * (1.0 + a) * sigma2
                }
                Variant::CbExactMean => test + n * sigma2 * (a - 1.0 / a) - n * (1.0 + a) * sigma2,
                _ => unreachable!(),
            }
        })
        .collect();
    if !variant.is_cb() {
        return Err(Error::invalid(format!("{} is not a CB variant", variant.name())));
    }
    Ok(RiskEstimate::from_draws(Estimator::Cb, per_draw, a, Some(variant)))
}

/// Per-draw covariance terms `c_b = sum_i w_i(b) (Y*_ib - center_i) g_i(Y*^b)`
/// scaled so their mean is the summed bootstrap covariance estimate.
fn covariance_terms(draws: &CoupledDrawSet, fits: &DrawFits, variant: Variant, sigma2: f64) -> Result<Vec<f64>> {
    let bn = draws.n_draws();
    if bn < 2 {
        return Err(Error::invalid("bootstrap covariance needs B >= 2"));
    }
    let n = draws.n();
    let mut center = vec![0.0; n];
    for b in 0..bn {
        center.iter_mut().zip(draws.ystar(b)).for_each(|(c, v)| *c += v);
    }
    center.iter_mut().for_each(|c| *c /= bn as f64);
    let mut gbar = vec![0.0; n];
    for b in 0..bn {
        gbar.iter_mut().zip(fits.get(b)).for_each(|(c, v)| *c += v);
    }
    gbar.iter_mut().for_each(|c| *c /= bn as f64);
    let scale = bn as f64 / (bn as f64 - 1.0);

    match variant {
        Variant::ByCovariance => Ok((0..bn)
            .map(|b| {
                let s: f64 = draws
                    .ystar(b)
                    .iter()
                    .zip(&center)
                    .zip(fits.get(b))
                    .zip(&gbar)
                    .map(|(((v, c), gi), gm)| (v - c) * (gi - gm))
                    .sum();
                scale * s
            })
            .collect()),
        // the center y is known, so 1/B is the unbiased normalisation
        Variant::ByBreimanIncrement => Ok((0..bn)
            .map(|b| {
                draws.ystar(b).iter().zip(draws.y()).zip(fits.get(b)).map(|((v, y), gi)| (v - y) * gi).sum()
            })
            .collect()),
        Variant::ByYePerCoordinate => {
            // rescale coordinate i by alpha sigma2 / s_i^2, its expected bootstrap variance
            let mut var = vec![0.0; n];
            for b in 0..bn {
                for ((s, v), c) in var.iter_mut().zip(draws.ystar(b)).zip(&center) {
                    *s += (v - c) * (v - c);
                }
            }
            let target = draws.alpha() * sigma2;
            let w: Vec<f64> = var.iter().map(|s| target * (bn as f64 - 1.0) / s).collect();
            if w.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("per-coordinate bootstrap variance".into()));
            }
            Ok((0..bn)
                .map(|b| {
                    let s: f64 = draws
                        .ystar(b)
                        .iter()
                        .zip(&center)
                        .zip(fits.get(b))
                        .zip(&gbar)
                        .zip(&w)
                        .map(|((((v, c), gi), gm), wi)| wi * (v - c) * (gi - gm))
                        .sum();
                    scale * s
                })
                .collect())
        }
        _ => Err(Error::invalid(format!("{} is not a BY variant", variant.name()))),
    }
}

/// Breiman-Ye estimate: `||y - g(y)||^2 + (2/alpha) sum_i Cov*_i - n sigma2`.
pub fn by_risk(
    draws: &CoupledDrawSet,
    g: &Predictor,
    ctx: Option<&DesignContext>,
    sigma2: f64,
    variant: Variant,
) -> Result<RiskEstimate> {
    let fits = fit_draws(draws, g, ctx)?;
    let gy = g.predict(draws.y(), ctx)?;
    by_risk_from_fits(draws, &fits, &gy, sigma2, variant)
}

pub fn by_risk_from_fits(
    draws: &CoupledDrawSet,
    fits: &DrawFits,
    gy: &[f64],
    sigma2: f64,
    variant: Variant,
) -> Result<RiskEstimate> {
    check_sigma2(sigma2)?;
    check_fits(draws, fits)?;
    check_len(draws.n(), gy.len())?;
    let a = draws.alpha();
    let train = sq_dist(draws.y(), gy);
    let n = draws.n() as f64;
    let per_draw = covariance_terms(draws, fits, variant, sigma2)?
        .into_iter()
        .map(|c| train + 2.0 / a * c - n * sigma2)
        .collect();
    Ok(RiskEstimate::from_draws(Estimator::By, per_draw, a, Some(variant)))
}

/// Efron's estimate: the bootstrap covariance without the `1/alpha` inflation.
pub fn efron_risk(
    draws: &CoupledDrawSet,
    g: &Predictor,
    ctx: Option<&DesignContext>,
    sigma2: f64,
) -> Result<RiskEstimate> {
    let fits = fit_draws(draws, g, ctx)?;
    let gy = g.predict(draws.y(), ctx)?;
    efron_risk_from_fits(draws, &fits, &gy, sigma2)
}

pub fn efron_risk_from_fits(
    draws: &CoupledDrawSet,
    fits: &DrawFits,
    gy: &[f64],
    sigma2: f64,
) -> Result<RiskEstimate> {
    check_sigma2(sigma2)?;
    check_fits(draws, fits)?;
    check_len(draws.n(), gy.len())?;
    let train = sq_dist(draws.y(), gy);
    let n = draws.n() as f64;
    let per_draw = covariance_terms(draws, fits, Variant::ByCovariance, sigma2)?
        .into_iter()
        .map(|c| train + 2.0 * c - n * sigma2)
        .collect();
    Ok(RiskEstimate::from_draws(Estimator::Efron, per_draw, draws.alpha(), Some(Variant::ByCovariance)))
}

/// Stein's unbiased risk estimate `||y - g(y)||^2 + 2 sigma2 div g(y) - n sigma2`.
pub fn sure(y: &[f64], g: &Predictor, ctx: Option<&DesignContext>, sigma2: f64) -> Result<RiskEstimate> {
    check_sigma2(sigma2)?;
    if !g.has_analytic_divergence() {
        return Err(Error::UnsupportedDivergence(g.to_string()));
    }
    let fit = g.fit(y, ctx)?;
    let div = fit.divergence.ok_or_else(|| Error::UnsupportedDivergence(g.to_string()))?;
    let value = sq_dist(y, &fit.fitted) + 2.0 * sigma2 * div - y.len() as f64 * sigma2;
    Ok(RiskEstimate { estimator: Estimator::Sure, value, per_draw: None, alpha: 0.0, b: 0, variant: None })
}

/// Unbiased estimate of the degrees of freedom at the elevated noise level,
/// `(CB - mean_b ||Y* - g(Y*)||^2 + n sigma2 (1 + alpha)) / (2 sigma2 (1 + alpha))`.
pub fn cb_df(draws: &CoupledDrawSet, g: &Predictor, ctx: Option<&DesignContext>, sigma2: f64) -> Result<DfEstimate> {
    let fits = fit_draws(draws, g, ctx)?;
    cb_df_from_fits(draws, &fits, sigma2)
}

pub fn cb_df_from_fits(draws: &CoupledDrawSet, fits: &DrawFits, sigma2: f64) -> Result<DfEstimate> {
    let cb = cb_risk_from_fits(draws, fits, sigma2, Variant::CbDefault)?;
    let a = draws.alpha();
    let train: Vec<f64> = (0..draws.n_draws()).map(|b| sq_dist(draws.ystar(b), fits.get(b))).collect();
    let s2a = sigma2 * (1.0 + a);
    let value = (cb.value - mean(&train) + draws.n() as f64 * s2a) / (2.0 * s2a);
    Ok(DfEstimate { value, method: DfMethod::CbDf, alpha: a })
}

/// Ye's bootstrap degrees of freedom `(1 / (sigma2 alpha)) sum_i Cov*_i`, or
/// with `per_coordinate` the form `sum_i Cov*_i / s_i^2`.
pub fn ye_df(
    draws: &CoupledDrawSet,
    g: &Predictor,
    ctx: Option<&DesignContext>,
    sigma2: f64,
    per_coordinate: bool,
) -> Result<DfEstimate> {
    let fits = fit_draws(draws, g, ctx)?;
    ye_df_from_fits(draws, &fits, sigma2, per_coordinate)
}

pub fn ye_df_from_fits(draws: &CoupledDrawSet, fits: &DrawFits, sigma2: f64, per_coordinate: bool) -> Result<DfEstimate> {
    check_sigma2(sigma2)?;
    check_fits(draws, fits)?;
    let (variant, method) = if per_coordinate {
        (Variant::ByYePerCoordinate, DfMethod::YePerCoordinate)
    } else {
        (Variant::ByCovariance, DfMethod::YeDf)
    };
    let c = mean(&covariance_terms(draws, fits, variant, sigma2)?);
    let a = draws.alpha();
    Ok(DfEstimate { value: c / (sigma2 * a), method, alpha: a })
}

/// CB under a general error covariance `Sigma` and loss `||x||_A^2 = x^T A^{-1} x`.
#[allow(clippy::too_many_arguments)]
pub fn structured_cb_risk(
    y: &[f64],
    sigma: &DMatrix<f64>,
    a: &DMatrix<f64>,
    alpha: f64,
    b: usize,
    g: &Predictor,
    ctx: Option<&DesignContext>,
    rng: RngSeed,
) -> Result<RiskEstimate> {
    let sf = SpdFactor::new(sigma)?;
    let af = SpdFactor::new(a)?;
    let draws = make_structured_coupled_draws(y, &sf, alpha, b, rng)?;
    structured_cb_risk_from_draws(&draws, sigma, &af, g, ctx)
}

pub fn structured_cb_risk_from_draws(
    draws: &CoupledDrawSet,
    sigma: &DMatrix<f64>,
    a: &SpdFactor,
    g: &Predictor,
    ctx: Option<&DesignContext>,
) -> Result<RiskEstimate> {
    check_len(draws.n(), a.dim())?;
    check_len(draws.n(), sigma.nrows())?;
    let fits = fit_draws(draws, g, ctx)?;
    let alpha = draws.alpha();
    let offset = trace_inv_times(a, sigma);
    let per_draw = (0..draws.n_draws())
        .map(|b| {
            let r: Vec<f64> = draws.ydagger(b).iter().zip(fits.get(b)).map(|(u, v)| u - v).collect();
            a.inv_quad_form(&r) - a.inv_quad_form(draws.omega(b)) / alpha - offset
        })
        .collect();
    Ok(RiskEstimate::from_draws(Estimator::CbStructured, per_draw, alpha, Some(Variant::CbDefault)))
}

/// Convex generator of a Bregman divergence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BregmanGenerator {
    /// `phi(x) = ||x||^2`, giving squared Euclidean distance.
    SquaredNorm,
    /// `phi(x) = sum x_i log x_i` on the positive orthant (Kullback-Leibler).
    NegEntropy,
}

impl BregmanGenerator {
    pub fn phi(&self, x: &[f64]) -> f64 {
        match self {
            BregmanGenerator::SquaredNorm => sq_norm(x),
            BregmanGenerator::NegEntropy => x.iter().map(|v| v * v.ln()).sum(),
        }
    }

    pub fn grad(&self, x: &[f64]) -> Vec<f64> {
        match self {
            BregmanGenerator::SquaredNorm => x.iter().map(|v| 2.0 * v).collect(),
            BregmanGenerator::NegEntropy => x.iter().map(|v| v.ln() + 1.0).collect(),
        }
    }

    /// `D(a, b) = phi(a) - phi(b) - <grad phi(b), a - b>`.
    pub fn divergence(&self, a: &[f64], b: &[f64]) -> f64 {
        let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        self.phi(a) - self.phi(b) - dot(&self.grad(b), &diff)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BregmanReport {
    /// General identity with arbitrary means, evaluated by plug-in moments.
    pub general_residual: f64,
    pub general_se: f64,
    /// Special case `E[V] = E[W]`, `U` and `V` identically distributed.
    pub special_residual: f64,
    pub special_se: f64,
    pub samples: usize,
}

const BREGMAN_BATCHES: usize = 100;

/// Monte Carlo check of the three-point identity for Bregman divergences.
///
/// `sampler` returns an independent triple `(U, V, W)`. The general residual is
/// `E D(V, g(U)) - E D(W, g(U)) - E phi(V) + E phi(W) - <E grad phi(g(U)), E W - E V>`
/// and the special residual is `E D(V, g(U)) - E D(W, g(U)) - E phi(U) + E phi(W)`.
pub fn bregman_three_point_check<S, G>(
    phi: BregmanGenerator,
    sampler: S,
    g: G,
    m: usize,
    rng: RngSeed,
) -> Result<BregmanReport>
where
    S: Fn(&mut rand_chacha::ChaCha8Rng) -> (Vec<f64>, Vec<f64>, Vec<f64>) + Sync + Send,
    G: Fn(&[f64]) -> Vec<f64> + Sync + Send,
{
    if m < 2 * BREGMAN_BATCHES {
        return Err(Error::invalid(format!("need at least {} samples", 2 * BREGMAN_BATCHES)));
    }
    struct Sample {
        lhs: f64,
        phi_u: f64,
        phi_v: f64,
        phi_w: f64,
        grad: Vec<f64>,
        v: Vec<f64>,
        w: Vec<f64>,
    }
    let samples = try_map_range(m, |i| {
        let mut r = rng.substream(i as u64).rng();
        let (u, v, w) = sampler(&mut r);
        let gu = g(&u);
        let s = Sample {
            lhs: phi.divergence(&v, &gu) - phi.divergence(&w, &gu),
            phi_u: phi.phi(&u),
            phi_v: phi.phi(&v),
            phi_w: phi.phi(&w),
            grad: phi.grad(&gu),
            v,
            w,
        };
        let finite = s.lhs.is_finite() && s.phi_u.is_finite() && s.phi_v.is_finite() && s.phi_w.is_finite();
        if finite {
            Ok(s)
        } else {
            Err(Error::NonFinite(format!("Bregman generator at sample {i}")))
        }
    })?;

    let special: Vec<f64> = samples.iter().map(|s| s.lhs - s.phi_u + s.phi_w).collect();
    let special_est = crate::stats::OracleEstimate::from_samples(&special);

    // plug-in moments are not a per-sample mean, so use batch means for the SE
    let general_of = |chunk: &[Sample]| -> f64 {
        let k = chunk.len() as f64;
        let d = chunk[0].v.len();
        let mut eg = vec![0.0; d];
        let mut ewv = vec![0.0; d];
        let mut acc = 0.0;
        for s in chunk {
            acc += s.lhs - s.phi_v + s.phi_w;
            for j in 0..d {
                eg[j] += s.grad[j] / k;
                ewv[j] += (s.w[j] - s.v[j]) / k;
            }
        }
        acc / k - dot(&eg, &ewv)
    };
    let general_residual = general_of(&samples);
    let per = m / BREGMAN_BATCHES;
    let batches: Vec<f64> = samples.chunks_exact(per).map(general_of).collect();
    let general_se = crate::stats::std_dev(&batches) / (batches.len() as f64).sqrt();

    Ok(BregmanReport {
        general_residual,
        general_se,
        special_residual: special_est.value,
        special_se: special_est.std_error,
        samples: m,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::make_coupled_draws;

    fn draws(y: &[f64], alpha: f64, b: usize, seed: u64) -> CoupledDrawSet {
        make_coupled_draws(y, 1.0, alpha, b, RngSeed::new(seed)).unwrap()
    }

    #[test]
    fn value_is_mean_of_per_draw() {
        let d = draws(&[1.0, -2.0, 0.5], 0.3, 17, 1);
        let g = Predictor::SoftThreshold { t: 0.7 };
        for v in [Variant::CbDefault, Variant::CbRawPair, Variant::CbExactMean] {
            let est = cb_risk(&d, &g, None, 1.0, v).unwrap();
            assert!((est.value - mean(est.per_draw.as_ref().unwrap())).abs() < 1e-12);
            assert_eq!(est.b, 17);
        }
        for v in [Variant::ByCovariance, Variant::ByBreimanIncrement, Variant::ByYePerCoordinate] {
            let est = by_risk(&d, &g, None, 1.0, v).unwrap();
            assert!((est.value - mean(est.per_draw.as_ref().unwrap())).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_rule_per_draw_formula() {
        let d = draws(&[1.0, -2.0, 0.5, 3.0], 0.2, 5, 2);
        let est = cb_risk(&d, &Predictor::Zero, None, 1.0, Variant::CbDefault).unwrap();
        for (b, v) in est.per_draw.unwrap().iter().enumerate() {
            let expect = sq_norm(d.ydagger(b)) - sq_norm(d.omega(b)) / 0.2 - 4.0;
            assert!((v - expect).abs() < 1e-10);
        }
    }

    #[test]
    fn by_zero_rule_is_training_error() {
        let y = [1.0, -2.0, 0.5];
        let d = draws(&y, 0.5, 10, 3);
        let est = by_risk(&d, &Predictor::Zero, None, 1.0, Variant::ByCovariance).unwrap();
        assert!((est.value - (sq_norm(&y) - 3.0)).abs() < 1e-12);
        let ef = efron_risk(&d, &Predictor::Zero, None, 1.0).unwrap();
        assert!((ef.value - (sq_norm(&y) - 3.0)).abs() < 1e-12);
    }

    #[test]
    fn by_needs_two_draws() {
        let d = draws(&[1.0, 2.0], 0.5, 1, 4);
        assert!(by_risk(&d, &Predictor::Identity, None, 1.0, Variant::ByCovariance).is_err());
        assert!(cb_risk(&d, &Predictor::Identity, None, 1.0, Variant::CbDefault).is_ok());
    }

    #[test]
    fn by_identity_covariance_is_exact() {
        // for g = identity the centred covariance is the bootstrap variance
        let d = draws(&[0.3, 0.1, -0.4, 2.0], 0.4, 50, 5);
        let ye = ye_df(&d, &Predictor::Identity, None, 1.0, true).unwrap();
        assert!((ye.value - 4.0).abs() < 1e-10);
    }

    #[test]
    fn sure_examples() {
        let y = [2.0, -0.5, -3.0];
        let s = sure(&y, &Predictor::SoftThreshold { t: 1.0 }, None, 1.0).unwrap();
        // independent evaluation of the formula
        let g = [1.0, 0.0, -2.0];
        let manual = sq_dist(&y, &g) + 2.0 * 2.0 - 3.0;
        assert!((s.value - manual).abs() < 1e-12);
        assert!((s.value - 3.25).abs() < 1e-12);
        for sigma2 in [0.5, 1.0, 3.0] {
            let s = sure(&y, &Predictor::Identity, None, sigma2).unwrap();
            assert_eq!(s.value, 3.0 * sigma2);
        }
        assert!(matches!(
            sure(&y, &Predictor::ForwardStepwise { k: 1 }, None, 1.0),
            Err(Error::UnsupportedDivergence(_))
        ));
    }

    #[test]
    fn structured_reduces_to_isotropic() {
        let y = [0.4, -1.2, 2.2, 0.0, 1.0];
        let n = y.len();
        let sigma2 = 1.7;
        let sigma = DMatrix::<f64>::identity(n, n) * sigma2;
        let sf = SpdFactor::new(&sigma).unwrap();
        let seed = RngSeed::new(6);
        let sd = make_structured_coupled_draws(&y, &sf, 0.3, 40, seed).unwrap();
        let g = Predictor::SoftThreshold { t: 0.8 };
        let plain = cb_risk(&sd, &g, None, sigma2, Variant::CbDefault).unwrap();

        let a_id = SpdFactor::new(&DMatrix::identity(n, n)).unwrap();
        let st = structured_cb_risk_from_draws(&sd, &sigma, &a_id, &g, None).unwrap();
        assert!((st.value - plain.value).abs() <= 1e-10 * plain.value.abs().max(1.0));

        // A = Sigma measures loss in units of sigma2
        let st2 = structured_cb_risk_from_draws(&sd, &sigma, &sf, &g, None).unwrap();
        assert!((st2.value * sigma2 - plain.value).abs() <= 1e-10 * plain.value.abs().max(1.0));
    }

    #[test]
    fn bregman_point_mass_is_exact() {
        let c = vec![0.5, 1.5, 2.0];
        for phi in [BregmanGenerator::SquaredNorm, BregmanGenerator::NegEntropy] {
            let cc = c.clone();
            let rep = bregman_three_point_check(
                phi,
                move |_| (cc.clone(), cc.clone(), cc.clone()),
                |u: &[f64]| u.iter().map(|v| v * 1.1).collect(),
                1000,
                RngSeed::new(1),
            )
            .unwrap();
            assert_eq!(rep.special_residual, 0.0);
            assert!(rep.general_residual.abs() < 1e-12);
        }
    }

    #[test]
    fn squared_norm_bregman_is_squared_distance() {
        let a = [1.0, 2.0, -1.0];
        let b = [0.5, -1.0, 3.0];
        let d = BregmanGenerator::SquaredNorm.divergence(&a, &b);
        assert!((d - sq_dist(&a, &b)).abs() < 1e-12);
    }

    #[test]
    fn variant_names_parse() {
        for v in ["cb_default", "cb_raw_pair", "cb_exact_mean", "by_covariance", "by_breiman_increment", "by_ye_per_coordinate"] {
            assert_eq!(v.parse::<Variant>().unwrap().name(), v);
        }
        assert!("nope".parse::<Variant>().is_err());
    }
}
