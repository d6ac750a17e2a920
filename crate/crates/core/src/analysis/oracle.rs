use serde::{Deserialize, Serialize};

use super::check_reps;
use crate::error::{check_len, Error, Result};
use crate::linalg::SpdFactor;
use crate::model::{NormalModel, StructuredNormalModel};
use crate::par::try_map_range;
use crate::predictors::{DesignContext, Predictor};
use crate::rng::{fill_standard_normal, RngSeed};
use crate::stats::{combined_se, dot, sq_dist, OracleEstimate};

/// `Risk_alpha(g) = E ||theta - g(Y_alpha)||^2`; `alpha = 0` gives the risk.
pub fn mc_risk(
    model: &NormalModel,
    g: &Predictor,
    ctx: Option<&DesignContext>,
    alpha: f64,
    r: usize,
    seed: RngSeed,
) -> Result<OracleEstimate> {
    check_reps(r, "replications")?;
    let theta = model.theta();
    let losses = try_map_range(r, |i| {
        let y = model.sample_elevated(alpha, seed.substream(i as u64))?;
        Ok::<_, Error>(sq_dist(theta, &g.predict(&y, ctx)?))
    })?;
    Ok(OracleEstimate::from_samples(&losses))
}

/// Risk curve over a grid of noise levels with common random numbers: every
/// level reuses the same standard normal draws, so differences between
/// neighbouring levels are estimated far more precisely than the levels.
pub fn risk_alpha_curve(
    model: &NormalModel,
    g: &Predictor,
    ctx: Option<&DesignContext>,
    alphas: &[f64],
    r: usize,
    seed: RngSeed,
) -> Result<Vec<OracleEstimate>> {
    check_reps(r, "replications")?;
    if alphas.iter().any(|a| !(*a >= 0.0)) || alphas.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::invalid("alpha grid must be sorted and non-negative"));
    }
    let sigma = model.sigma();
    let rows = try_map_range(r, |i| {
        alphas
            .iter()
            .map(|a| {
                let y = model.sample_scaled(sigma * (1.0 + a).sqrt(), seed.substream(i as u64));
                Ok(sq_dist(model.theta(), &g.predict(&y, ctx)?))
            })
            .collect::<Result<Vec<f64>>>()
    })?;
    Ok((0..alphas.len())
        .map(|j| OracleEstimate::from_samples(&rows.iter().map(|row| row[j]).collect::<Vec<_>>()))
        .collect())
}

/// Degrees of freedom at noise level `(1 + alpha) sigma2`,
/// `sum_i Cov(Y_i, g_i(Y)) / sigma2_alpha`.
///
/// Each replication contributes `<Y - theta, g(Y) - g(theta)> / sigma2_alpha`,
/// whose mean is the covariance sum because `E[Y - theta] = 0`; subtracting
/// `g(theta)` is a control variate.
pub fn mc_df(
    model: &NormalModel,
    g: &Predictor,
    ctx: Option<&DesignContext>,
    alpha: f64,
    r: usize,
    seed: RngSeed,
) -> Result<OracleEstimate> {
    check_reps(r, "replications")?;
    let theta = model.theta();
    let g_theta = g.predict(theta, ctx)?;
    let s2a = model.sigma2() * (1.0 + alpha);
    let vals = try_map_range(r, |i| {
        let y = model.sample_elevated(alpha, seed.substream(i as u64))?;
        let gy = g.predict(&y, ctx)?;
        let s: f64 = y.iter().zip(theta).zip(gy.iter().zip(&g_theta)).map(|((a, t), (b, c))| (a - t) * (b - c)).sum();
        Ok::<_, Error>(s / s2a)
    })?;
    Ok(OracleEstimate::from_samples(&vals))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimismDecomposition {
    /// `sum_i E[Cov(Y*_i, g_i(Y*) | Y)]`
    pub a_alpha: OracleEstimate,
    /// `sum_i Cov(Y_i, g_i(Y*))`
    pub b_alpha: OracleEstimate,
    /// `a_alpha + b_alpha`, with the standard error of the paired sum.
    pub sum: OracleEstimate,
    /// `sum_i Cov(Y*_i, g_i(Y*))` estimated directly from independent draws.
    pub total: OracleEstimate,
}

/// Law-of-total-covariance split of the covariance sum at the elevated level,
/// where `Y* = Y + sqrt(alpha) omega`.
pub fn mc_optimism_decomposition(
    model: &NormalModel,
    g: &Predictor,
    ctx: Option<&DesignContext>,
    alpha: f64,
    r_outer: usize,
    b_inner: usize,
    seed: RngSeed,
) -> Result<OptimismDecomposition> {
    check_reps(r_outer, "outer replications")?;
    check_reps(b_inner, "inner draws")?;
    if !(alpha > 0.0) {
        return Err(Error::invalid("alpha must be positive"));
    }
    let theta = model.theta();
    let n = model.n();
    let g_theta = g.predict(theta, ctx)?;
    let sa = alpha.sqrt();
    let sigma = model.sigma();
    let outer = seed.substream(0);

    let pairs = try_map_range(r_outer, |i| {
        let rep = outer.substream(i as u64);
        let y = model.sample_data(rep.substream(u64::MAX));
        let mut z = vec![0.0; n];
        let mut ystars = Vec::with_capacity(b_inner);
        let mut fits = Vec::with_capacity(b_inner);
        for b in 0..b_inner {
            fill_standard_normal(&mut rep.substream(b as u64).rng(), &mut z);
            let ys: Vec<f64> = y.iter().zip(&z).map(|(v, e)| v + sa * sigma * e).collect();
            fits.push(g.predict(&ys, ctx)?);
            ystars.push(ys);
        }
        let bf = b_inner as f64;
        let mut ybar = vec![0.0; n];
        let mut gbar = vec![0.0; n];
        for (ys, f) in ystars.iter().zip(&fits) {
            for j in 0..n {
                ybar[j] += ys[j] / bf;
                gbar[j] += f[j] / bf;
            }
        }
        let mut a = 0.0;
        for (ys, f) in ystars.iter().zip(&fits) {
            a += ys.iter().zip(&ybar).zip(f.iter().zip(&gbar)).map(|((u, m), (v, c))| (u - m) * (v - c)).sum::<f64>();
        }
        a /= bf - 1.0;
        let b: f64 = y.iter().zip(theta).zip(gbar.iter().zip(&g_theta)).map(|((u, t), (v, c))| (u - t) * (v - c)).sum();
        Ok::<_, Error>((a, b))
    })?;

    let direct_seed = seed.substream(1);
    let direct = try_map_range(r_outer, |i| {
        let y = model.sample_elevated(alpha, direct_seed.substream(i as u64))?;
        let gy = g.predict(&y, ctx)?;
        Ok::<_, Error>(y.iter().zip(theta).zip(gy.iter().zip(&g_theta)).map(|((u, t), (v, c))| (u - t) * (v - c)).sum::<f64>())
    })?;

    let a: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let b: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let s: Vec<f64> = pairs.iter().map(|p| p.0 + p.1).collect();
    Ok(OptimismDecomposition {
        a_alpha: OracleEstimate::from_samples(&a),
        b_alpha: OracleEstimate::from_samples(&b),
        sum: OracleEstimate::from_samples(&s),
        total: OracleEstimate::from_samples(&direct),
    })
}

impl OptimismDecomposition {
    /// `|sum - total|` in units of the combined standard error.
    pub fn closure_z(&self) -> f64 {
        (self.sum.value - self.total.value).abs() / combined_se(self.sum.std_error, self.total.std_error)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteinCheck {
    /// `sum_i Cov(Y_i, g_i(Y)) / sigma2`
    pub covariance_side: OracleEstimate,
    /// `E[div g(Y)]`
    pub divergence_side: OracleEstimate,
    /// Paired difference of the two sides.
    pub residual: OracleEstimate,
}

/// Both sides of Stein's formula `sum_i Cov(Y_i, g_i(Y)) = sigma2 E[div g(Y)]`
/// on the same draws.
pub fn stein_formula_check(
    model: &NormalModel,
    g: &Predictor,
    ctx: Option<&DesignContext>,
    r: usize,
    seed: RngSeed,
) -> Result<SteinCheck> {
    check_reps(r, "replications")?;
    if !g.has_analytic_divergence() {
        return Err(Error::UnsupportedDivergence(g.to_string()));
    }
    let theta = model.theta();
    let g_theta = g.predict(theta, ctx)?;
    let s2 = model.sigma2();
    let pairs = try_map_range(r, |i| {
        let y = model.sample_data(seed.substream(i as u64));
        let fit = g.fit(&y, ctx)?;
        let resid: Vec<f64> = y.iter().zip(theta).map(|(a, t)| a - t).collect();
        let centred: Vec<f64> = fit.fitted.iter().zip(&g_theta).map(|(a, c)| a - c).collect();
        let div = fit.divergence.ok_or_else(|| Error::UnsupportedDivergence(g.to_string()))?;
        Ok::<_, Error>((dot(&resid, &centred) / s2, div))
    })?;
    let c: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let d: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let diff: Vec<f64> = pairs.iter().map(|p| p.0 - p.1).collect();
    Ok(SteinCheck {
        covariance_side: OracleEstimate::from_samples(&c),
        divergence_side: OracleEstimate::from_samples(&d),
        residual: OracleEstimate::from_samples(&diff),
    })
}

/// `E ||theta - g(Y_alpha)||_A^2` with `Y_alpha ~ N(theta, (1 + alpha) Sigma)`.
pub fn mc_structured_risk(
    model: &StructuredNormalModel,
    g: &Predictor,
    ctx: Option<&DesignContext>,
    a: &SpdFactor,
    alpha: f64,
    r: usize,
    seed: RngSeed,
) -> Result<OracleEstimate> {
    check_reps(r, "replications")?;
    check_len(model.n(), a.dim())?;
    let theta = model.theta();
    let vals = try_map_range(r, |i| {
        let y = model.sample_elevated(alpha, seed.substream(i as u64))?;
        let gy = g.predict(&y, ctx)?;
        let d: Vec<f64> = theta.iter().zip(&gy).map(|(t, v)| t - v).collect();
        Ok::<_, Error>(a.inv_quad_form(&d))
    })?;
    Ok(OracleEstimate::from_samples(&vals))
}


#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use std::sync::Arc;

    fn model(n: usize, sigma2: f64) -> NormalModel {
        NormalModel::new((0..n).map(|i| (i as f64 * 0.7).sin() * 2.0).collect(), sigma2).unwrap()
    }

    fn smoother(n: usize) -> DMatrix<f64> {
        // symmetric moving-average smoother
        DMatrix::from_fn(n, n, |i, j| match (i as isize - j as isize).abs() {
            0 => 0.5,
            1 => 0.25,
            _ => 0.0,
        })
    }

    #[test]
    fn identity_risk_is_n_sigma2() {
        let m = model(8, 1.5);
        let r = mc_risk(&m, &Predictor::Identity, None, 0.0, 20_000, RngSeed::new(1)).unwrap();
        assert!(r.within(12.0, 4.0), "{r:?}");
        let r = mc_risk(&m, &Predictor::Zero, None, 0.7, 100, RngSeed::new(1)).unwrap();
        let t2: f64 = m.theta().iter().map(|t| t * t).sum();
        assert!((r.value - t2).abs() < 1e-12 && r.std_error < 1e-10);
    }

    #[test]
    fn linear_smoother_risk_formula() {
        // exact risk ||(I - S) theta||^2 + sigma2 tr(S^T S)
        let n = 6;
        let s = smoother(n);
        let m = model(n, 0.8);
        let th = nalgebra::DVector::from_column_slice(m.theta());
        let bias = (&th - &s * &th).norm_squared();
        let exact = bias + 0.8 * (s.transpose() * &s).trace();
        let g = Predictor::LinearSmoother(Arc::new(s));
        let r = mc_risk(&m, &g, None, 0.0, 40_000, RngSeed::new(2)).unwrap();
        assert!(r.within(exact, 4.0), "{r:?} vs {exact}");
    }

    #[test]
    fn df_of_smoother_and_soft_threshold() {
        let n = 6;
        let s = smoother(n);
        let tr = s.trace();
        let m = model(n, 1.0);
        let g = Predictor::LinearSmoother(Arc::new(s));
        let df = mc_df(&m, &g, None, 0.0, 5_000, RngSeed::new(3)).unwrap();
        assert!(df.within(tr, 4.0), "{df:?}");
        let st = Predictor::SoftThreshold { t: 1.0 };
        let df = mc_df(&m, &st, None, 0.0, 40_000, RngSeed::new(4)).unwrap();
        let check = stein_formula_check(&m, &st, None, 40_000, RngSeed::new(4)).unwrap();
        assert!(df.within(check.divergence_side.value, 4.0 * 1.5));
        assert!(check.residual.within(0.0, 4.0), "{check:?}");
    }

    #[test]
    fn decomposition_of_linear_smoother() {
        let n = 5;
        let s = smoother(n);
        let tr = s.trace();
        let m = model(n, 1.0);
        let g = Predictor::LinearSmoother(Arc::new(s));
        let d = mc_optimism_decomposition(&m, &g, None, 0.5, 4000, 10, RngSeed::new(5)).unwrap();
        assert!(d.a_alpha.within(0.5 * tr, 4.0), "{d:?}");
        assert!(d.b_alpha.within(tr, 4.0), "{d:?}");
        assert!(d.closure_z() < 4.0);
    }

    #[test]
    fn curve_of_identity_is_linear() {
        let m = model(5, 1.0);
        let alphas = [0.0, 0.5, 1.0];
        let c = risk_alpha_curve(&m, &Predictor::Identity, None, &alphas, 20_000, RngSeed::new(6)).unwrap();
        for (a, e) in alphas.iter().zip(&c) {
            assert!(e.within(5.0 * (1.0 + a), 4.0), "{e:?}");
        }
        assert!(risk_alpha_curve(&m, &Predictor::Identity, None, &[0.5, 0.1], 10, RngSeed::new(0)).is_err());
    }

    #[test]
    fn oracle_standard_error_scales() {
        let m = model(4, 1.0);
        let g = Predictor::SoftThreshold { t: 0.5 };
        let a = mc_risk(&m, &g, None, 0.0, 20_000, RngSeed::new(7)).unwrap();
        let b = mc_risk(&m, &g, None, 0.0, 40_000, RngSeed::new(8)).unwrap();
        let ratio = a.std_error / b.std_error;
        assert!(ratio > 1.30 && ratio < 1.55, "{ratio}");
    }
}
