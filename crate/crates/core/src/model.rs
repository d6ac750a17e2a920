//! The Gaussian normal means model and coupled bootstrap draws.
//!
//! Data are `Y ~ N(theta, sigma2 I)`. A coupled draw adds auxiliary noise
//! `omega ~ N(0, sigma2 I)` in two directions,
//!
//! ```text
//! Y*  = Y + sqrt(alpha) * omega
//! Y†  = Y - omega / sqrt(alpha)
//! ```
//!
//! which makes `Y*` and `Y†` independent with common mean `theta`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{check_len, Error, Result};
use crate::linalg::SpdFactor;
use crate::rng::{fill_standard_normal, RngSeed};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalModel {
    theta: Vec<f64>,
    sigma2: f64,
}

impl NormalModel {
    pub fn new(theta: Vec<f64>, sigma2: f64) -> Result<Self> {
        if !(sigma2 > 0.0) || !sigma2.is_finite() {
            return Err(Error::invalid(format!("sigma2 must be positive, got {sigma2}")));
        }
        if theta.is_empty() {
            return Err(Error::invalid("theta must be non-empty"));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("theta".into()));
        }
        Ok(NormalModel { theta, sigma2 })
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn sigma(&self) -> f64 {
        self.sigma2.sqrt()
    }

    pub fn n(&self) -> usize {
        self.theta.len()
    }

    /// One data vector `y ~ N(theta, sigma2 I)`.
    pub fn sample_data(&self, rng: RngSeed) -> Vec<f64> {
        self.sample_scaled(self.sigma(), rng)
    }

    /// `Y_alpha ~ N(theta, (1 + alpha) sigma2 I)`.
    pub fn sample_elevated(&self, alpha: f64, rng: RngSeed) -> Result<Vec<f64>> {
        if !(alpha >= 0.0) || !alpha.is_finite() {
            return Err(Error::invalid(format!("alpha must be non-negative, got {alpha}")));
        }
        Ok(self.sample_scaled(((1.0 + alpha) * self.sigma2).sqrt(), rng))
    }

    /// `theta + scale * z` for standard normal `z`; the building block for
    /// common-random-number comparisons across noise levels.
    pub fn sample_scaled(&self, scale: f64, rng: RngSeed) -> Vec<f64> {
        let mut z = vec![0.0; self.n()];
        fill_standard_normal(&mut rng.rng(), &mut z);
        self.theta.iter().zip(z).map(|(t, e)| t + scale * e).collect()
    }
}

/// Data model with a general covariance, `Y ~ N(theta, Sigma)`.
#[derive(Debug, Clone)]
pub struct StructuredNormalModel {
    theta: Vec<f64>,
    sigma: DMatrix<f64>,
    factor: SpdFactor,
}

impl StructuredNormalModel {
    pub fn new(theta: Vec<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        check_len(sigma.nrows(), theta.len())?;
        let factor = SpdFactor::new(&sigma)?;
        Ok(StructuredNormalModel { theta, sigma, factor })
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn factor(&self) -> &SpdFactor {
        &self.factor
    }

    pub fn n(&self) -> usize {
        self.theta.len()
    }

    /// `theta + sqrt(1 + alpha) L z`, i.e. a draw from `N(theta, (1 + alpha) Sigma)`.
    pub fn sample_elevated(&self, alpha: f64, rng: RngSeed) -> Result<Vec<f64>> {
        if !(alpha >= 0.0) {
            return Err(Error::invalid(format!("alpha must be non-negative, got {alpha}")));
        }
        let n = self.n();
        let mut z = vec![0.0; n];
        fill_standard_normal(&mut rng.rng(), &mut z);
        let mut lz = vec![0.0; n];
        self.factor.mul_lower(&z, &mut lz);
        let c = (1.0 + alpha).sqrt();
        Ok(self.theta.iter().zip(lz).map(|(t, e)| t + c * e).collect())
    }

    pub fn sample_data(&self, rng: RngSeed) -> Vec<f64> {
        self.sample_elevated(0.0, rng).expect("alpha = 0 is valid")
    }
}

/// `B` coupled triplets `(omega, Y*, Y†)` generated from one data vector.
///
/// Rows are stored contiguously (row-major `B x n`). Draw `b` comes from
/// substream `b` of the seed, so a set with `B` draws is a prefix of the set
/// with `B' > B` draws from the same seed.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledDrawSet {
    y: Vec<f64>,
    alpha: f64,
    b: usize,
    omega: Vec<f64>,
    ystar: Vec<f64>,
    ydagger: Vec<f64>,
}

impl CoupledDrawSet {
    fn from_omega(y: &[f64], alpha: f64, b: usize, omega: Vec<f64>) -> Self {
        let n = y.len();
        let sa = alpha.sqrt();
        let mut ystar = Vec::with_capacity(b * n);
        let mut ydagger = Vec::with_capacity(b * n);
        for row in omega.chunks_exact(n) {
            for (yi, wi) in y.iter().zip(row) {
                ystar.push(yi + sa * wi);
                ydagger.push(yi - wi / sa);
            }
        }
        CoupledDrawSet { y: y.to_vec(), alpha, b, omega, ystar, ydagger }
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn n_draws(&self) -> usize {
        self.b
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn omega(&self, b: usize) -> &[f64] {
        let n = self.n();
        &self.omega[b * n..(b + 1) * n]
    }

    pub fn ystar(&self, b: usize) -> &[f64] {
        let n = self.n();
        &self.ystar[b * n..(b + 1) * n]
    }

    pub fn ydagger(&self, b: usize) -> &[f64] {
        let n = self.n();
        &self.ydagger[b * n..(b + 1) * n]
    }

    /// Keep only the first `b` draws.
    pub fn truncated(&self, b: usize) -> CoupledDrawSet {
        let b = b.min(self.b);
        let n = self.n();
        CoupledDrawSet {
            y: self.y.clone(),
            alpha: self.alpha,
            b,
            omega: self.omega[..b * n].to_vec(),
            ystar: self.ystar[..b * n].to_vec(),
            ydagger: self.ydagger[..b * n].to_vec(),
        }
    }

    /// Short hex digest of the auxiliary noise, used to show that two
    /// estimators consumed the same draws.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.alpha.to_le_bytes());
        for w in &self.omega {
            h.update(w.to_le_bytes());
        }
        let digest = h.finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Largest relative violation of `(Y* + alpha Y†) / (1 + alpha) = Y`.
    pub fn reconstruction_error(&self) -> f64 {
        let a = self.alpha;
        let mut worst = 0.0_f64;
        for b in 0..self.b {
            for ((ys, yd), y) in self.ystar(b).iter().zip(self.ydagger(b)).zip(&self.y) {
                let rec = (ys + a * yd) / (1.0 + a);
                let scale = y.abs().max(ys.abs()).max(a * yd.abs()).max(1.0);
                worst = worst.max((rec - y).abs() / scale);
            }
        }
        worst
    }
}

fn check_draw_args(alpha: f64, b: usize) -> Result<()> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::invalid(format!("alpha must be positive, got {alpha}")));
    }
    if b < 1 {
        return Err(Error::invalid("B must be at least 1"));
    }
    Ok(())
}

/// Coupled draws with `omega ~ N(0, sigma2 I)`.
pub fn make_coupled_draws(
    y: &[f64],
    sigma2: f64,
    alpha: f64,
    b: usize,
    rng: RngSeed,
) -> Result<CoupledDrawSet> {
    check_draw_args(alpha, b)?;
    if !(sigma2 > 0.0) {
        return Err(Error::invalid(format!("sigma2 must be positive, got {sigma2}")));
    }
    let n = y.len();
    let sigma = sigma2.sqrt();
    let mut omega = vec![0.0; b * n];
    for (i, row) in omega.chunks_exact_mut(n).enumerate() {
        fill_standard_normal(&mut rng.substream(i as u64).rng(), row);
        row.iter_mut().for_each(|w| *w *= sigma);
    }
    Ok(CoupledDrawSet::from_omega(y, alpha, b, omega))
}

/// Coupled draws with `omega ~ N(0, Sigma)`, generated as `L z`.
pub fn make_structured_coupled_draws(
    y: &[f64],
    sigma: &SpdFactor,
    alpha: f64,
    b: usize,
    rng: RngSeed,
) -> Result<CoupledDrawSet> {
    check_draw_args(alpha, b)?;
    let n = y.len();
    check_len(sigma.dim(), n)?;
    let mut omega = vec![0.0; b * n];
    let mut z = vec![0.0; n];
    for (i, row) in omega.chunks_exact_mut(n).enumerate() {
        fill_standard_normal(&mut rng.substream(i as u64).rng(), &mut z);
        sigma.mul_lower(&z, row);
    }
    Ok(CoupledDrawSet::from_omega(y, alpha, b, omega))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{covariance, mean, variance};

    #[test]
    fn rejects_bad_parameters() {
        assert!(NormalModel::new(vec![0.0; 3], 0.0).is_err());
        assert!(NormalModel::new(vec![0.0; 3], -1.0).is_err());
        let m = NormalModel::new(vec![0.0; 3], 1.0).unwrap();
        assert!(m.sample_elevated(-0.1, RngSeed::new(0)).is_err());
        assert!(make_coupled_draws(&[1.0], 1.0, 0.0, 10, RngSeed::new(0)).is_err());
        assert!(make_coupled_draws(&[1.0], 1.0, 0.5, 0, RngSeed::new(0)).is_err());
    }

    #[test]
    fn standard_model_moments() {
        let m = NormalModel::new(vec![0.0; 10_000], 1.0).unwrap();
        let y = m.sample_data(RngSeed::new(1));
        assert!(mean(&y).abs() < 4.0 / 100.0);
        assert!((variance(&y) - 1.0).abs() < 0.1);
    }

    #[test]
    fn shifted_model_moments() {
        // sd of the sample mean is 0.02 and of the sample variance about
        // 4 * sqrt(2 / 9999) = 0.057, so the bands are 5 and 5 sds wide.
        let m = NormalModel::new(vec![5.0; 10_000], 4.0).unwrap();
        let y = m.sample_data(RngSeed::new(2));
        let (mu, v) = (mean(&y), variance(&y));
        assert!((4.9..=5.1).contains(&mu), "{mu}");
        assert!((3.7..=4.3).contains(&v), "{v}");
    }

    #[test]
    fn elevated_variance() {
        let m = NormalModel::new(vec![0.0; 10_000], 1.0).unwrap();
        let y = m.sample_elevated(1.0, RngSeed::new(3)).unwrap();
        let v = variance(&y);
        assert!((1.9..=2.1).contains(&v), "{v}");
        // alpha = 0 uses the same stream and scale as sample_data
        assert_eq!(m.sample_elevated(0.0, RngSeed::new(9)).unwrap(), m.sample_data(RngSeed::new(9)));
    }

    #[test]
    fn coupled_algebra_is_exact() {
        let y = vec![1.5, -0.3, 2.0, 0.0];
        for &alpha in &[0.05, 0.2, 1.0, 3.0] {
            let d = make_coupled_draws(&y, 2.0, alpha, 50, RngSeed::new(4)).unwrap();
            let sa = alpha.sqrt();
            for b in 0..d.n_draws() {
                for i in 0..y.len() {
                    assert_eq!(d.ystar(b)[i], y[i] + sa * d.omega(b)[i]);
                    assert_eq!(d.ydagger(b)[i], y[i] - d.omega(b)[i] / sa);
                }
            }
            assert!(d.reconstruction_error() < 1e-12);
        }
        let d = make_coupled_draws(&y, 1.0, 1.0, 20, RngSeed::new(5)).unwrap();
        for b in 0..20 {
            for i in 0..y.len() {
                let avg = (d.ystar(b)[i] + d.ydagger(b)[i]) / 2.0;
                assert!((avg - y[i]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn draw_sets_are_prefix_stable_and_replayable() {
        let y = vec![0.1, 0.2];
        let big = make_coupled_draws(&y, 1.0, 0.3, 40, RngSeed::new(6)).unwrap();
        let small = make_coupled_draws(&y, 1.0, 0.3, 10, RngSeed::new(6)).unwrap();
        assert_eq!(big.truncated(10), small);
        let again = make_coupled_draws(&y, 1.0, 0.3, 40, RngSeed::new(6)).unwrap();
        assert_eq!(big, again);
        assert_eq!(big.checksum(), again.checksum());
    }

    #[test]
    fn coupled_pair_uncorrelated() {
        // independent once Y is random; given Y the pair is perfectly
        // negatively correlated
        let m = 100_000;
        let model = NormalModel::new(vec![0.7], 1.0).unwrap();
        let root = RngSeed::new(7);
        let (mut ys, mut yd) = (Vec::with_capacity(m), Vec::with_capacity(m));
        for r in 0..m as u64 {
            let y = model.sample_data(root.path(&[r, 0]));
            let d = make_coupled_draws(&y, 1.0, 0.2, 1, root.path(&[r, 1])).unwrap();
            ys.push(d.ystar(0)[0]);
            yd.push(d.ydagger(0)[0]);
        }
        let corr = covariance(&ys, &yd) / (variance(&ys) * variance(&yd)).sqrt();
        assert!(corr.abs() < 4.0 / (m as f64).sqrt(), "{corr}");
        assert!((variance(&ys) / 1.2 - 1.0).abs() < 0.03);
        assert!((variance(&yd) / 6.0 - 1.0).abs() < 0.03);

        let d = make_coupled_draws(&[0.7], 1.0, 0.2, 10_000, RngSeed::new(8)).unwrap();
        let ys: Vec<f64> = (0..d.n_draws()).map(|b| d.ystar(b)[0]).collect();
        let yd: Vec<f64> = (0..d.n_draws()).map(|b| d.ydagger(b)[0]).collect();
        assert!((covariance(&ys, &yd) + 1.0).abs() < 0.05);
    }

    #[test]
    fn structured_draw_moments() {
        let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 4.0]);
        let f = SpdFactor::new(&sigma).unwrap();
        let d = make_structured_coupled_draws(&[0.0, 0.0], &f, 0.5, 200_000, RngSeed::new(8)).unwrap();
        let w2: Vec<f64> = (0..d.n_draws()).map(|b| d.omega(b)[1]).collect();
        let v = variance(&w2);
        assert!((3.9..=4.1).contains(&v), "{v}");

        let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let f = SpdFactor::new(&sigma).unwrap();
        let d = make_structured_coupled_draws(&[0.0, 0.0], &f, 0.5, 200_000, RngSeed::new(9)).unwrap();
        let w1: Vec<f64> = (0..d.n_draws()).map(|b| d.omega(b)[0]).collect();
        let w2: Vec<f64> = (0..d.n_draws()).map(|b| d.omega(b)[1]).collect();
        let prods: Vec<f64> = w1.iter().zip(&w2).map(|(a, b)| a * b).collect();
        let se = crate::stats::std_dev(&prods) / (prods.len() as f64).sqrt();
        assert!((covariance(&w1, &w2) - 0.5).abs() < 4.0 * se);
        assert!(d.reconstruction_error() < 1e-12);
    }

    #[test]
    fn isotropic_structured_matches_plain() {
        let y = vec![0.3, -1.0, 2.0];
        let sigma2 = 2.25;
        let f = SpdFactor::new(&(DMatrix::identity(3, 3) * sigma2)).unwrap();
        let a = make_structured_coupled_draws(&y, &f, 0.4, 30, RngSeed::new(10)).unwrap();
        let b = make_coupled_draws(&y, sigma2, 0.4, 30, RngSeed::new(10)).unwrap();
        for k in 0..30 {
            for i in 0..3 {
                assert!((a.omega(k)[i] - b.omega(k)[i]).abs() < 1e-14);
            }
        }
    }
}
