use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::predictors::Predictor;

/// Settings of the degrees-of-freedom path experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DfSettings {
    /// Number of lasso penalties, log-spaced from `lambda_max` down.
    pub path_len: usize,
    /// Smallest penalty as a fraction of `lambda_max`.
    pub min_ratio: f64,
    /// Stepwise path runs over `k = 0..=max_steps`.
    pub max_steps: usize,
}

impl Default for DfSettings {
    fn default() -> Self {
        DfSettings { path_len: 50, min_ratio: 1e-3, max_steps: 30 }
    }
}

/// Settings of the 1-D denoising experiment. The signal length is `n` and the
/// noise level follows from `snr`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DenoiseSettings {
    /// Piecewise constant levels, one per equal-length segment.
    pub levels: Vec<f64>,
    /// Number of positive penalties; `lambda = 0` is always added.
    pub lambda_count: usize,
    /// Penalty range in units of the noise standard deviation.
    pub lambda_lo: f64,
    pub lambda_hi: f64,
}

impl Default for DenoiseSettings {
    fn default() -> Self {
        DenoiseSettings { levels: vec![0.0, 4.0, 2.0, 6.0], lambda_count: 30, lambda_lo: 0.05, lambda_hi: 50.0 }
    }
}

/// Settings of the bias and variance studies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VarianceSettings {
    /// Bootstrap sizes of the reducible-variance grid.
    pub b_grid: Vec<usize>,
    /// Independent groups of `B` draws per data vector in the RVar grid.
    pub groups: usize,
    /// Draws per data vector for conditional moments in the IVar study.
    pub b_inner: usize,
    /// Stepwise sizes of the bias-bound table.
    pub stepwise_ks: Vec<usize>,
}

impl Default for VarianceSettings {
    fn default() -> Self {
        VarianceSettings { b_grid: vec![5, 10, 20, 40, 80], groups: 10, b_inner: 200, stepwise_ks: vec![3, 10, 90] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub n: usize,
    pub p: usize,
    /// Number of nonzero coefficients, placed at the first `s` indices.
    pub s: usize,
    pub snr: f64,
    #[serde(rename = "B")]
    pub b: usize,
    pub alphas: Vec<f64>,
    pub reps: usize,
    pub seed: u64,
    pub predictors: Vec<Predictor>,
    /// Uniform shrink of `n`, `p` and `reps`.
    pub scale_factor: f64,
    /// Replications of every Monte Carlo oracle.
    pub oracle_reps: usize,
    pub df: DfSettings,
    pub denoise: DenoiseSettings,
    pub variance: VarianceSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: "figure1".into(),
            n: 100,
            p: 200,
            s: 5,
            snr: 0.4,
            b: 100,
            alphas: vec![0.05, 0.1, 0.2, 0.5, 0.8, 1.0],
            reps: 100,
            seed: 1,
            predictors: ["ridge:5", "lasso:0.31", "stepwise:2", "lasso_cv"]
                .iter()
                .map(|s| s.parse().expect("default predictor"))
                .collect(),
            scale_factor: 1.0,
            oracle_reps: 100_000,
            df: DfSettings::default(),
            denoise: DenoiseSettings::default(),
            variance: VarianceSettings::default(),
        }
    }
}

/// Dimensions after applying the scale factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resolved {
    pub n: usize,
    pub p: usize,
    pub s: usize,
    pub reps: usize,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n == 0 || self.p == 0 {
            return bad("n and p must be positive".into());
        }
        if self.s > self.p {
            return bad(format!("s = {} exceeds p = {}", self.s, self.p));
        }
        if !(self.snr > 0.0 && self.snr.is_finite()) {
            return bad(format!("snr must be positive, got {}", self.snr));
        }
        if self.alphas.is_empty() || self.alphas.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
            return bad("alphas must be non-empty and positive".into());
        }
        if self.alphas.windows(2).any(|w| w[1] <= w[0]) {
            return bad("alphas must be strictly increasing".into());
        }
        if self.reps < 2 {
            return bad(format!("reps must be at least 2, got {}", self.reps));
        }
        if self.b < 2 {
            return bad(format!("B must be at least 2, got {}", self.b));
        }
        if self.oracle_reps < 2 {
            return bad("oracle_reps must be at least 2".into());
        }
        if !(self.scale_factor > 0.0 && self.scale_factor <= 1.0) {
            return bad(format!("scale_factor must lie in (0, 1], got {}", self.scale_factor));
        }
        let r = self.resolved();
        if r.reps < 2 || r.n < 2 {
            return bad("scale_factor leaves fewer than 2 observations or repetitions".into());
        }
        Ok(())
    }

    /// `n`, `p` and `reps` shrink by `scale_factor`; a dense scenario
    /// (`s = p`) stays dense, a sparse one keeps its `s`.
    pub fn resolved(&self) -> Resolved {
        let shrink = |v: usize| ((v as f64 * self.scale_factor).round() as usize).max(1);
        let p = shrink(self.p);
        let s = if self.s == self.p { p } else { self.s.min(p) };
        Resolved { n: shrink(self.n), p, s, reps: shrink(self.reps).max(2) }
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serialises");
        let digest = Sha256::digest(json.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Builds a config from a JSON document, filling missing keys with defaults.
    pub fn from_json(value: Value) -> Result<Self> {
        serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))
    }

    /// Applies a `key=value` override, see [`set_dotted`].
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let mut doc = serde_json::to_value(&*self)?;
        set_dotted(&mut doc, key, value)?;
        *self = Self::from_json(doc)?;
        Ok(())
    }

    /// Applies `key=value` strings in order.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for kv in overrides {
            let (k, v) = split_override(kv.as_ref())?;
            self.set(k, v)?;
        }
        Ok(())
    }
}

/// The three bias and variance studies, each with its own
/// scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppendixConfig {
    /// Bias bounds for forward stepwise, sizes from `variance.stepwise_ks`.
    pub bias: ExperimentConfig,
    /// Reducible variance over the `(B, alpha)` grid for the first predictor.
    pub rvar: ExperimentConfig,
    /// Irreducible variance components of CB and BY for the first predictor.
    pub ivar: ExperimentConfig,
}

impl Default for AppendixConfig {
    fn default() -> Self {
        let base = ExperimentConfig { snr: 2.0, ..Default::default() };
        AppendixConfig {
            bias: ExperimentConfig { name: "bias_bounds".into(), predictors: vec![], ..base.clone() },
            rvar: ExperimentConfig {
                name: "rvar".into(),
                predictors: vec![Predictor::Lasso { lambda: 0.31 }],
                ..base.clone()
            },
            ivar: ExperimentConfig {
                name: "ivar".into(),
                s: 200,
                predictors: vec!["lasso_cv".parse().expect("default predictor")],
                ..base
            },
        }
    }
}

/// A runnable experiment, tagged by the `experiment` key of its document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment")]
pub enum ExperimentSpec {
    #[serde(rename = "figure1")]
    Figure1(ExperimentConfig),
    #[serde(rename = "figure2")]
    Figure2(ExperimentConfig),
    #[serde(rename = "df")]
    DfPath(ExperimentConfig),
    #[serde(rename = "denoise")]
    Denoise(ExperimentConfig),
    #[serde(rename = "appendixF")]
    Appendix(AppendixConfig),
}

impl ExperimentSpec {
    pub fn from_json(value: Value) -> Result<Self> {
        serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ExperimentSpec::Figure1(_) => "figure1",
            ExperimentSpec::Figure2(_) => "figure2",
            ExperimentSpec::DfPath(_) => "df",
            ExperimentSpec::Denoise(_) => "denoise",
            ExperimentSpec::Appendix(_) => "appendixF",
        }
    }

    /// File stem of the outputs.
    pub fn name(&self) -> &str {
        match self {
            ExperimentSpec::Figure1(c)
            | ExperimentSpec::Figure2(c)
            | ExperimentSpec::DfPath(c)
            | ExperimentSpec::Denoise(c) => &c.name,
            ExperimentSpec::Appendix(_) => "appendixF",
        }
    }

    pub fn configs(&self) -> Vec<&ExperimentConfig> {
        match self {
            ExperimentSpec::Figure1(c)
            | ExperimentSpec::Figure2(c)
            | ExperimentSpec::DfPath(c)
            | ExperimentSpec::Denoise(c) => vec![c],
            ExperimentSpec::Appendix(a) => vec![&a.bias, &a.rvar, &a.ivar],
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.configs().into_iter().try_for_each(|c| c.validate())
    }

    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("spec serialises");
        let digest = Sha256::digest(json.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if key == "experiment" {
            return Err(Error::Config("the experiment kind cannot be overridden".into()));
        }
        let mut doc = serde_json::to_value(&*self)?;
        set_dotted(&mut doc, key, value)?;
        *self = Self::from_json(doc)?;
        Ok(())
    }

    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for kv in overrides {
            let (k, v) = split_override(kv.as_ref())?;
            match self {
                // a bare key applies to all three studies
                ExperimentSpec::Appendix(a) if !k.contains('.') => {
                    for c in [&mut a.bias, &mut a.rvar, &mut a.ivar] {
                        c.set(k, v)?;
                    }
                }
                _ => self.set(k, v)?,
            }
        }
        Ok(())
    }
}

fn split_override(kv: &str) -> Result<(&str, &str)> {
    let (k, v) = kv.split_once('=').ok_or_else(|| Error::Config(format!("override `{kv}` is not key=value")))?;
    Ok((k.trim(), v))
}

/// Replaces the value at a dotted key path of a JSON document. The value is
/// read as JSON when possible, otherwise as a string; list-valued keys also
/// accept comma separated items.
pub fn set_dotted(doc: &mut Value, key: &str, value: &str) -> Result<()> {
    let mut slot = doc;
    for part in key.split('.') {
        slot = slot
            .as_object_mut()
            .and_then(|m| m.get_mut(part))
            .ok_or_else(|| Error::Config(format!("unknown config key `{key}`")))?;
    }
    *slot = if slot.is_array() && !value.trim_start().starts_with('[') {
        Value::Array(value.split(',').map(|v| scalar(v.trim())).collect())
    } else {
        scalar(value.trim())
    };
    Ok(())
}

fn scalar(v: &str) -> Value {
    serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        assert_eq!(c.resolved(), Resolved { n: 100, p: 200, s: 5, reps: 100 });
    }

    #[test]
    fn scale_keeps_dense_dense() {
        let c = ExperimentConfig { s: 200, scale_factor: 0.5, ..Default::default() };
        assert_eq!(c.resolved(), Resolved { n: 50, p: 100, s: 100, reps: 50 });
        let c = ExperimentConfig { scale_factor: 0.5, ..Default::default() };
        assert_eq!(c.resolved().s, 5);
    }

    #[test]
    fn overrides() {
        let mut c = ExperimentConfig::default();
        c.apply_overrides(&["reps=3", "B=10", "denoise.levels=1,2", "predictors=soft:1,lasso_cv:5:3", "name=smoke"])
            .unwrap();
        assert_eq!((c.reps, c.b, c.name.as_str()), (3, 10, "smoke"));
        assert_eq!(c.denoise.levels, vec![1.0, 2.0]);
        assert_eq!(c.predictors[1].to_string(), "lasso_cv:5:3");
        c.set("alphas", "[0.1, 0.2]").unwrap();
        assert_eq!(c.alphas, vec![0.1, 0.2]);
        assert!(c.set("nope", "1").is_err());
        assert!(c.set("reps", "many").is_err());
        assert!(c.apply_overrides(&["reps"]).is_err());
    }

    #[test]
    fn validation_rejects() {
        for kv in ["s=300", "reps=1", "alphas=[0.5,0.1]", "alphas=[0]", "snr=0", "scale_factor=2"] {
            let mut c = ExperimentConfig::default();
            c.apply_overrides(&[kv]).unwrap();
            assert!(c.validate().is_err(), "{kv}");
        }
    }

    #[test]
    fn spec_documents() {
        let doc = serde_json::json!({"experiment": "figure2", "s": 200, "snr": 2.0, "predictors": ["lasso_cv"]});
        let mut spec = ExperimentSpec::from_json(doc).unwrap();
        assert_eq!(spec.kind(), "figure2");
        spec.apply_overrides(&["reps=3"]).unwrap();
        match &spec {
            ExperimentSpec::Figure2(c) => assert_eq!((c.s, c.reps), (200, 3)),
            _ => unreachable!(),
        }
        assert!(spec.set("experiment", "df").is_err());
        assert!(ExperimentSpec::from_json(serde_json::json!({"experiment": "figure1", "typo": 1})).is_err());
        assert!(ExperimentSpec::from_json(serde_json::json!({"n": 3})).is_err());

        let mut app = ExperimentSpec::from_json(serde_json::json!({"experiment": "appendixF", "ivar": {"B": 50}})).unwrap();
        app.apply_overrides(&["reps=4", "rvar.seed=9"]).unwrap();
        let ExperimentSpec::Appendix(a) = &app else { unreachable!() };
        assert_eq!((a.bias.reps, a.rvar.reps, a.ivar.reps, a.ivar.b), (4, 4, 4, 50));
        assert_eq!((a.rvar.seed, a.bias.seed), (9, 1));
        app.validate().unwrap();
        let back = ExperimentSpec::from_json(serde_json::to_value(&app).unwrap()).unwrap();
        assert_eq!(back, app);
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seed = 2;
        assert_ne!(a.hash(), b.hash());
        let back: ExperimentConfig = serde_json::from_str(&serde_json::to_string(&a).unwrap()).unwrap();
        assert_eq!(back, a);
    }
}
