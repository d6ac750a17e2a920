use super::check_reps;
use crate::error::{Error, Result};
use crate::par::{map_range, try_map_range};
use crate::predictors::{DesignContext, Predictor};
use crate::rng::{fill_standard_normal, standard_normal, RngSeed};
use crate::stats::{dot, normal_cdf, normal_pdf, sq_dist, OracleEstimate};

/// Shared pieces of the infinite-bootstrap estimators, one row per draw:
/// `||y - g(y + sqrt(alpha) omega)||^2` and `(2/sqrt(alpha)) <omega, g(y + sqrt(alpha) omega)>`.
fn inf_terms(
    y: &[f64],
    g: &Predictor,
    ctx: Option<&DesignContext>,
    sigma2: f64,
    alpha: f64,
    b_big: usize,
    seed: RngSeed,
) -> Result<Vec<(f64, f64)>> {
    check_reps(b_big, "bootstrap draws")?;
    if !(alpha > 0.0) || !(sigma2 > 0.0) {
        return Err(Error::invalid("alpha and sigma2 must be positive"));
    }
    let (sa, sigma) = (alpha.sqrt(), sigma2.sqrt());
    try_map_range(b_big, |b| {
        let mut w = vec![0.0; y.len()];
        fill_standard_normal(&mut seed.substream(b as u64).rng(), &mut w);
        w.iter_mut().for_each(|v| *v *= sigma);
        let ys: Vec<f64> = y.iter().zip(&w).map(|(a, e)| a + sa * e).collect();
        let gs = g.predict(&ys, ctx)?;
        Ok((sq_dist(y, &gs), 2.0 / sa * dot(&w, &gs)))
    })
}

/// Infinite-bootstrap CB, `E[CB | Y = y]`, in the expanded form
/// `E||y - g(y + sqrt(alpha) omega)||^2 + (2/sqrt(alpha)) E<omega, g(y + sqrt(alpha) omega)> - n sigma2`,
/// approximated with `b_big` draws.
pub fn cb_inf(
    y: &[f64],
    g: &Predictor,
    ctx: Option<&DesignContext>,
    sigma2: f64,
    alpha: f64,
    b_big: usize,
    seed: RngSeed,
) -> Result<OracleEstimate> {
    let rows = inf_terms(y, g, ctx, sigma2, alpha, b_big, seed)?;
    let nsig = y.len() as f64 * sigma2;
    let vals: Vec<f64> = rows.iter().map(|(t, c)| t + c - nsig).collect();
    Ok(OracleEstimate::from_samples(&vals))
}

/// Infinite-bootstrap BY: the training term is `||y - g(y)||^2`.
pub fn by_inf(
    y: &[f64],
    g: &Predictor,
    ctx: Option<&DesignContext>,
    sigma2: f64,
    alpha: f64,
    b_big: usize,
    seed: RngSeed,
) -> Result<OracleEstimate> {
    let train = sq_dist(y, &g.predict(y, ctx)?);
    let rows = inf_terms(y, g, ctx, sigma2, alpha, b_big, seed)?;
    let nsig = y.len() as f64 * sigma2;
    let vals: Vec<f64> = rows.iter().map(|(_, c)| train + c - nsig).collect();
    Ok(OracleEstimate::from_samples(&vals))
}

/// Closed form of `(2/sqrt(alpha)) sum_i E[omega_i h_t(y_i + sqrt(alpha) omega_i)]`
/// for the hard threshold `h_t(x) = x 1{|x| > t}` and `omega_i ~ N(0, sigma^2)`.
///
/// Per coordinate, with `s = sqrt(alpha) sigma`,
/// `(1/sqrt(alpha)) E[...] = (sigma t / sqrt(alpha)) [phi((t + y)/s) + phi((t - y)/s)]
///  + sigma^2 [Phi((-y - t)/s) + Phi((y - t)/s)]`.
pub fn ht_inner_product_exact(y: &[f64], t: f64, sigma: f64, alpha: f64) -> f64 {
    let sa = alpha.sqrt();
    let s = sa * sigma;
    let per: f64 = y
        .iter()
        .map(|&yi| {
            sigma * t / sa * (normal_pdf((t + yi) / s) + normal_pdf((t - yi) / s))
                + sigma * sigma * (normal_cdf((-yi - t) / s) + normal_cdf((yi - t) / s))
        })
        .sum();
    2.0 * per
}

/// Monte Carlo estimate of the quantity in [`ht_inner_product_exact`].
pub fn ht_inner_product_mc(y: &[f64], t: f64, sigma: f64, alpha: f64, m: usize, seed: RngSeed) -> Result<OracleEstimate> {
    check_reps(m, "draws")?;
    const CHUNKS: usize = 64;
    let sa = alpha.sqrt();
    let scale = 2.0 / sa;
    let per_chunk = m.div_ceil(CHUNKS);
    // Welford per chunk, merged in index order
    let parts = map_range(CHUNKS, |c| {
        let start = c * per_chunk;
        let end = ((c + 1) * per_chunk).min(m);
        let mut rng = seed.substream(c as u64).rng();
        let (mut k, mut mu, mut m2) = (0.0_f64, 0.0_f64, 0.0_f64);
        for _ in start..end {
            let mut v = 0.0;
            for &yi in y {
                let w = sigma * standard_normal(&mut rng);
                let x = yi + sa * w;
                if x.abs() > t {
                    v += w * x;
                }
            }
            v *= scale;
            k += 1.0;
            let d = v - mu;
            mu += d / k;
            m2 += d * (v - mu);
        }
        (k, mu, m2)
    });
    let (mut k, mut mu, mut m2) = (0.0_f64, 0.0_f64, 0.0_f64);
    for (kb, mb, m2b) in parts {
        if kb == 0.0 {
            continue;
        }
        let tot = k + kb;
        let d = mb - mu;
        mu += d * kb / tot;
        m2 += m2b + d * d * k * kb / tot;
        k = tot;
    }
    let var = m2 / (k - 1.0);
    Ok(OracleEstimate { value: mu, std_error: (var / k).sqrt(), replications: k as usize })
}

/// Noiseless limit `2 sigma^2 #{i : |y_i| > t}` of the hard-threshold inner product.
pub fn ht_divergence_limit(y: &[f64], t: f64, sigma: f64) -> Result<f64> {
    if y.iter().any(|v| v.abs() == t) {
        return Err(Error::invalid("a coordinate lies exactly on the threshold"));
    }
    Ok(2.0 * sigma * sigma * y.iter().filter(|v| v.abs() > t).count() as f64)
}
