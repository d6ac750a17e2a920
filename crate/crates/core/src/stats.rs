//! Summary statistics with a fixed reduction order.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

const PAIRWISE_BLOCK: usize = 64;

/// Pairwise (cascade) summation in a fixed tree order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= PAIRWISE_BLOCK {
        xs.iter().sum()
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    pairwise_sum(xs) / xs.len() as f64
}

/// Unbiased sample variance (1/(m-1) normalisation).
pub fn variance(xs: &[f64]) -> f64 {
    let m = xs.len();
    if m < 2 {
        return f64::NAN;
    }
    let mu = mean(xs);
    let dev: Vec<f64> = xs.iter().map(|x| (x - mu) * (x - mu)).collect();
    pairwise_sum(&dev) / (m - 1) as f64
}

pub fn std_dev(xs: &[f64]) -> f64 {
    variance(xs).sqrt()
}

/// Unbiased sample covariance of two equally long slices.
pub fn covariance(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let m = xs.len();
    if m < 2 {
        return f64::NAN;
    }
    let (mx, my) = (mean(xs), mean(ys));
    let prod: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).collect();
    pairwise_sum(&prod) / (m - 1) as f64
}

/// Large-sample standard error of the sample variance, `sqrt((m4 - s^4) / m)`.
pub fn variance_std_error(xs: &[f64]) -> f64 {
    let m = xs.len() as f64;
    let mu = mean(xs);
    let s2 = variance(xs);
    let m4 = mean(&xs.iter().map(|x| (x - mu).powi(4)).collect::<Vec<_>>());
    ((m4 - s2 * s2).max(0.0) / m).sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn sq_norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// A Monte Carlo approximation with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleEstimate {
    pub value: f64,
    pub std_error: f64,
    pub replications: usize,
}

impl OracleEstimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        OracleEstimate {
            value: mean(xs),
            std_error: std_dev(xs) / (xs.len() as f64).sqrt(),
            replications: xs.len(),
        }
    }

    pub fn exact(value: f64) -> Self {
        OracleEstimate { value, std_error: 0.0, replications: 0 }
    }

    /// Difference of two independent estimates.
    pub fn minus(&self, other: &OracleEstimate) -> OracleEstimate {
        OracleEstimate {
            value: self.value - other.value,
            std_error: self.std_error.hypot(other.std_error),
            replications: self.replications.min(other.replications),
        }
    }

    pub fn scale(&self, c: f64) -> OracleEstimate {
        OracleEstimate {
            value: self.value * c,
            std_error: self.std_error * c.abs(),
            replications: self.replications,
        }
    }

    /// `|value - target|` in units of the standard error.
    pub fn z_score(&self, target: f64) -> f64 {
        (self.value - target).abs() / self.std_error
    }

    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.value - target).abs() <= k * self.std_error
    }
}

/// Combined standard error of two independent estimates.
pub fn combined_se(a: f64, b: f64) -> f64 {
    a.hypot(b)
}

const TAIL_CLAMP: f64 = 37.0;

pub fn normal_pdf(z: f64) -> f64 {
    if z.abs() > TAIL_CLAMP {
        return 0.0;
    }
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard normal CDF through the complementary error function.
pub fn normal_cdf(z: f64) -> f64 {
    if z > TAIL_CLAMP {
        1.0
    } else if z < -TAIL_CLAMP {
        0.0
    } else {
        0.5 * erfc(-z / std::f64::consts::SQRT_2)
    }
}

/// Ordinary least squares slope of `y` on `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    covariance(x, y) / variance(x)
}
