use nalgebra::DMatrix;
use rand::Rng;

use super::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::model::NormalModel;
use crate::predictors::{lasso::x_vec, DesignContext};
use crate::rng::{fill_standard_normal, RngSeed};
use crate::stats::variance;

/// Fixed design, coefficients and noise level of one simulation scenario.
#[derive(Debug, Clone)]
pub struct ScenarioTruth {
    pub x: DMatrix<f64>,
    pub beta: Vec<f64>,
    pub sigma2: f64,
    /// `X beta`
    pub theta: Vec<f64>,
}

impl ScenarioTruth {
    pub fn model(&self) -> Result<NormalModel> {
        NormalModel::new(self.theta.clone(), self.sigma2)
    }

    pub fn context(&self) -> Result<DesignContext> {
        DesignContext::new(self.x.clone(), Some(self.beta.clone()))
    }
}

/// Noise variance giving `snr = Var(theta) / sigma2`, with the sample
/// variance (denominator `n - 1`) of the signal entries.
pub fn sigma2_for_snr(theta: &[f64], snr: f64) -> Result<f64> {
    let v = variance(theta);
    if !(v > 0.0) {
        return Err(Error::Config("signal has zero variance, SNR is undefined".into()));
    }
    if !(snr > 0.0) {
        return Err(Error::Config(format!("snr must be positive, got {snr}")));
    }
    Ok(v / snr)
}

/// Draws `X` with standard normal entries and `beta` with `Unif(-1, 1)`
/// entries on its first `s` coordinates. Both stay fixed for every repetition
/// of an experiment.
pub fn build_scenario(cfg: &ExperimentConfig, seed: RngSeed) -> Result<ScenarioTruth> {
    cfg.validate()?;
    let dims = cfg.resolved();
    if dims.s == 0 {
        return Err(Error::Config("s = 0 gives a zero signal, SNR is undefined".into()));
    }
    let mut rng = seed.substream(0).rng();
    let mut entries = vec![0.0; dims.n * dims.p];
    fill_standard_normal(&mut rng, &mut entries);
    let x = DMatrix::from_vec(dims.n, dims.p, entries);

    let mut rng = seed.substream(1).rng();
    let mut beta = vec![0.0; dims.p];
    for b in beta.iter_mut().take(dims.s) {
        *b = rng.random_range(-1.0..1.0);
    }
    let theta = x_vec(&x, &beta);
    let sigma2 = sigma2_for_snr(&theta, cfg.snr)?;
    Ok(ScenarioTruth { x, beta, sigma2, theta })
}
