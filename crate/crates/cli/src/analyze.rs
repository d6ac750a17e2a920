//! Analysis tables on a normal means problem: Stein's formula, the optimism
//! decomposition, the bias bounds and the hard-threshold closed form.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use cbrisk::analysis::{
    bias_bounds_curve, ht_inner_product_exact, ht_inner_product_mc, mc_optimism_decomposition, stein_formula_check,
};
use cbrisk::harness::{write_csv, write_json};
use cbrisk::{NormalModel, Predictor, RngSeed};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SteinSection {
    pub predictors: Vec<String>,
    pub reps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimismSection {
    pub predictors: Vec<String>,
    pub alphas: Vec<f64>,
    pub r_outer: usize,
    pub b_inner: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BiasSection {
    pub predictors: Vec<String>,
    pub alphas: Vec<f64>,
    pub reps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HtSection {
    pub t: f64,
    pub alphas: Vec<f64>,
    pub draws: usize,
}

/// Normal means problem with `s` entries at `amplitude` and the rest zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyzeConfig {
    pub name: String,
    pub seed: u64,
    pub n: usize,
    pub s: usize,
    pub amplitude: f64,
    pub sigma2: f64,
    pub stein: SteinSection,
    pub optimism: OptimismSection,
    pub bias: BiasSection,
    pub ht: HtSection,
}

impl Default for AnalyzeConfig {
    fn default() -> Self {
        let strings = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        AnalyzeConfig {
            name: "analyze".into(),
            seed: 1,
            n: 50,
            s: 10,
            amplitude: 3.0,
            sigma2: 1.0,
            stein: SteinSection { predictors: strings(&["moving_average:2", "soft:1"]), reps: 20_000 },
            optimism: OptimismSection {
                predictors: strings(&["soft:1"]),
                alphas: vec![0.05, 0.5, 1.0],
                r_outer: 2000,
                b_inner: 50,
            },
            bias: BiasSection { predictors: strings(&["soft:1"]), alphas: vec![0.1, 0.5, 1.0], reps: 20_000 },
            ht: HtSection { t: 1.5, alphas: vec![0.01, 0.1, 1.0], draws: 1_000_000 },
        }
    }
}

impl Default for SteinSection {
    fn default() -> Self {
        AnalyzeConfig::default().stein
    }
}

impl Default for OptimismSection {
    fn default() -> Self {
        AnalyzeConfig::default().optimism
    }
}

impl Default for BiasSection {
    fn default() -> Self {
        AnalyzeConfig::default().bias
    }
}

impl Default for HtSection {
    fn default() -> Self {
        AnalyzeConfig::default().ht
    }
}

impl AnalyzeConfig {
    pub fn from_json(doc: Value) -> Result<Self, CliError> {
        let cfg: AnalyzeConfig = serde_json::from_value(doc).map_err(|e| CliError::Parse(e.to_string()))?;
        if cfg.n == 0 || cfg.s > cfg.n {
            return Err(CliError::Parse(format!("need 0 <= s <= n and n > 0, got n = {}, s = {}", cfg.n, cfg.s)));
        }
        if !(cfg.sigma2 > 0.0) {
            return Err(CliError::Parse("sigma2 must be positive".into()));
        }
        Ok(cfg)
    }

    pub fn theta(&self) -> Vec<f64> {
        (0..self.n).map(|i| if i < self.s { self.amplitude } else { 0.0 }).collect()
    }

    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serialises");
        Sha256::digest(json.as_bytes())[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Parses a predictor spec, adding `moving_average:H`, the symmetric running
/// mean over `2H + 1` neighbours (truncated at the ends).
pub fn parse_predictor(spec: &str, n: usize) -> Result<Predictor, CliError> {
    if let Some(h) = spec.trim().strip_prefix("moving_average:") {
        let h: usize = h.parse().map_err(|_| CliError::Parse(format!("cannot parse predictor spec `{spec}`")))?;
        let mut s = DMatrix::zeros(n, n);
        for i in 0..n {
            let lo = i.saturating_sub(h);
            let hi = (i + h).min(n - 1);
            let w = 1.0 / (hi - lo + 1) as f64;
            for j in lo..=hi {
                s[(i, j)] = w;
            }
        }
        return Ok(Predictor::LinearSmoother(Arc::new(s)));
    }
    Ok(spec.parse()?)
}

#[derive(Serialize)]
struct SteinRow {
    predictor: String,
    covariance_side: f64,
    covariance_se: f64,
    divergence_side: f64,
    divergence_se: f64,
    residual: f64,
    residual_se: f64,
    z: f64,
}

#[derive(Serialize)]
struct OptimismRow {
    predictor: String,
    alpha: f64,
    a_alpha: f64,
    a_alpha_se: f64,
    b_alpha: f64,
    b_alpha_se: f64,
    total: f64,
    total_se: f64,
    closure_z: f64,
}

#[derive(Serialize)]
struct BiasRow {
    predictor: String,
    alpha: f64,
    true_bias: f64,
    true_bias_se: f64,
    bound_bd1: f64,
    bound_bd2_leading: f64,
    dominated: bool,
    premise_holds: bool,
}

#[derive(Serialize)]
struct HtRow {
    alpha: f64,
    t: f64,
    sigma: f64,
    exact: f64,
    monte_carlo: f64,
    monte_carlo_se: f64,
    z: f64,
    noiseless_limit: f64,
}

#[derive(Serialize)]
struct Sidecar<'a> {
    experiment: &'static str,
    config_hash: String,
    files: &'a [PathBuf],
    config: &'a AnalyzeConfig,
}

/// Runs every analysis and writes `<name>_{stein,optimism,bias,ht}.csv` plus
/// a `<name>.json` sidecar. Returns the CSV paths.
pub fn run(cfg: &AnalyzeConfig, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    std::fs::create_dir_all(out)?;
    let model = NormalModel::new(cfg.theta(), cfg.sigma2)?;
    let root = RngSeed::new(cfg.seed);
    let mut files = Vec::new();
    let path = |t: &str| out.join(format!("{}_{t}.csv", cfg.name));

    let mut stein = Vec::new();
    for (i, spec) in cfg.stein.predictors.iter().enumerate() {
        let g = parse_predictor(spec, cfg.n)?;
        let c = stein_formula_check(&model, &g, None, cfg.stein.reps, root.path(&[0, i as u64]))?;
        stein.push(SteinRow {
            predictor: spec.clone(),
            covariance_side: c.covariance_side.value,
            covariance_se: c.covariance_side.std_error,
            divergence_side: c.divergence_side.value,
            divergence_se: c.divergence_side.std_error,
            residual: c.residual.value,
            residual_se: c.residual.std_error,
            z: c.residual.value / c.residual.std_error,
        });
    }
    write_csv(&path("stein"), &stein)?;
    files.push(path("stein"));

    let mut optimism = Vec::new();
    for (i, spec) in cfg.optimism.predictors.iter().enumerate() {
        let g = parse_predictor(spec, cfg.n)?;
        for (j, &alpha) in cfg.optimism.alphas.iter().enumerate() {
            let seed = root.path(&[1, i as u64, j as u64]);
            let d = mc_optimism_decomposition(&model, &g, None, alpha, cfg.optimism.r_outer, cfg.optimism.b_inner, seed)?;
            optimism.push(OptimismRow {
                predictor: spec.clone(),
                alpha,
                a_alpha: d.a_alpha.value,
                a_alpha_se: d.a_alpha.std_error,
                b_alpha: d.b_alpha.value,
                b_alpha_se: d.b_alpha.std_error,
                total: d.total.value,
                total_se: d.total.std_error,
                closure_z: d.closure_z(),
            });
        }
    }
    write_csv(&path("optimism"), &optimism)?;
    files.push(path("optimism"));

    let mut bias = Vec::new();
    for (i, spec) in cfg.bias.predictors.iter().enumerate() {
        let g = parse_predictor(spec, cfg.n)?;
        let curve = bias_bounds_curve(&model, &g, None, &cfg.bias.alphas, cfg.bias.reps, root.path(&[2, i as u64]))?;
        bias.extend(curve.points.iter().map(|b| BiasRow {
            predictor: spec.clone(),
            alpha: b.alpha,
            true_bias: b.true_bias.value,
            true_bias_se: b.true_bias.std_error,
            bound_bd1: b.bound_bd1,
            bound_bd2_leading: b.bound_bd2_leading,
            dominated: b.dominated(),
            premise_holds: curve.premise_holds,
        }));
    }
    write_csv(&path("bias"), &bias)?;
    files.push(path("bias"));

    let y = model.sample_data(root.substream(3));
    let sigma = model.sigma();
    let limit = cbrisk::analysis::ht_divergence_limit(&y, cfg.ht.t, sigma)?;
    let mut ht = Vec::new();
    for (j, &alpha) in cfg.ht.alphas.iter().enumerate() {
        let exact = ht_inner_product_exact(&y, cfg.ht.t, sigma, alpha);
        let mc = ht_inner_product_mc(&y, cfg.ht.t, sigma, alpha, cfg.ht.draws, root.path(&[4, j as u64]))?;
        ht.push(HtRow {
            alpha,
            t: cfg.ht.t,
            sigma,
            exact,
            monte_carlo: mc.value,
            monte_carlo_se: mc.std_error,
            z: (mc.value - exact) / mc.std_error,
            noiseless_limit: limit,
        });
    }
    write_csv(&path("ht"), &ht)?;
    files.push(path("ht"));

    let sidecar = out.join(format!("{}.json", cfg.name));
    write_json(&sidecar, &Sidecar { experiment: "analyze", config_hash: cfg.hash(), files: &files, config: cfg })?;
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moving_average_rows_sum_to_one() {
        let Predictor::LinearSmoother(s) = parse_predictor("moving_average:2", 7).unwrap() else {
            panic!("expected a smoother");
        };
        for i in 0..7 {
            assert!((s.row(i).sum() - 1.0).abs() < 1e-12);
        }
        assert_eq!(s[(0, 3)], 0.0);
        assert!((s[(3, 1)] - 0.2).abs() < 1e-12);
        assert!(parse_predictor("moving_average:x", 7).is_err());
    }

    #[test]
    fn bundled_config_parses() {
        let doc = crate::config::load_document("analyze").unwrap();
        let cfg = AnalyzeConfig::from_json(doc).unwrap();
        assert_eq!(cfg.theta().iter().filter(|t| **t != 0.0).count(), cfg.s);
        assert!(AnalyzeConfig::from_json(serde_json::json!({"bogus": 1})).is_err());
    }
}
