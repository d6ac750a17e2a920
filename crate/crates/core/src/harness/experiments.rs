use std::collections::HashMap;

use serde::Serialize;

use super::config::{AppendixConfig, ExperimentConfig};
use super::scenario::{build_scenario, sigma2_for_snr};
use crate::analysis::{
    bias_bounds_curve, bias_variance_report, mc_df, measured_rvar, risk_alpha_curve, rvar_leading_terms, VarianceStudy,
};
use crate::error::{Error, Result};
use crate::estimators::{
    by_risk_from_fits, cb_df_from_fits, cb_risk_from_fits, fit_draws, sure, ye_df_from_fits, Estimator, Variant,
};
use crate::model::{make_coupled_draws, NormalModel};
use crate::par::try_map_range;
use crate::predictors::{cv::log_spaced, lambda_max, DesignContext, Predictor};
use crate::rng::RngSeed;
use crate::stats::{mean, ols_slope, std_dev, OracleEstimate};

// substream roots below the experiment seed
const DESIGN: u64 = 0;
const DATA: u64 = 1;
const DRAWS: u64 = 2;
const ORACLE: u64 = 3;
const STUDY: u64 = 4;

/// One estimate for one `(predictor, estimator, alpha, rep)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub scenario: String,
    pub predictor: String,
    pub estimator: String,
    pub alpha: f64,
    pub rep: usize,
    /// Empty when the fit failed; the reason is in `status`.
    pub estimate: Option<f64>,
    pub oracle_risk: f64,
    pub oracle_risk_alpha: f64,
    /// Identifies the bootstrap draws; rows sharing it consumed the same noise.
    pub draw_checksum: String,
    pub status: String,
    pub config_hash: String,
}

/// Grand mean of one estimator across repetitions, next to the oracles.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub scenario: String,
    pub predictor: String,
    pub estimator: String,
    pub alpha: f64,
    pub count: usize,
    pub mean: f64,
    pub se: f64,
    pub sd: f64,
    pub oracle_risk: f64,
    pub oracle_risk_se: f64,
    pub oracle_risk_alpha: f64,
    pub oracle_risk_alpha_se: f64,
}

impl SummaryRow {
    /// `(mean - target) / combined SE`.
    pub fn z_against(&self, target: f64, target_se: f64) -> f64 {
        (self.mean - target) / self.se.hypot(target_se)
    }

    pub fn z_risk(&self) -> f64 {
        self.z_against(self.oracle_risk, self.oracle_risk_se)
    }

    pub fn z_risk_alpha(&self) -> f64 {
        self.z_against(self.oracle_risk_alpha, self.oracle_risk_alpha_se)
    }
}

#[derive(Debug, Clone)]
pub struct RiskTable {
    pub rows: Vec<ResultRow>,
    pub summary: Vec<SummaryRow>,
    pub failures: usize,
}

impl RiskTable {
    pub fn find(&self, predictor: &str, estimator: &str, alpha: f64) -> Option<&SummaryRow> {
        self.summary.iter().find(|s| s.predictor == predictor && s.estimator == estimator && s.alpha == alpha)
    }
}

/// Risk (alpha = 0) and noise-elevated risks of one predictor.
#[derive(Debug, Clone)]
struct RiskOracle {
    risk: OracleEstimate,
    by_alpha: Vec<OracleEstimate>,
    error: Option<String>,
}

impl RiskOracle {
    fn at(&self, alphas: &[f64], alpha: f64) -> (OracleEstimate, OracleEstimate) {
        match alphas.iter().position(|a| *a == alpha) {
            Some(j) => (self.risk, self.by_alpha[j]),
            None => (self.risk, self.risk),
        }
    }
}

fn risk_oracles(
    model: &NormalModel,
    predictors: &[Predictor],
    ctx: Option<&DesignContext>,
    alphas: &[f64],
    r: usize,
    seed: RngSeed,
) -> Vec<RiskOracle> {
    let mut grid = vec![0.0];
    grid.extend_from_slice(alphas);
    predictors
        .iter()
        .enumerate()
        .map(|(i, g)| {
            match risk_alpha_curve(model, g, ctx, &grid, r, seed.substream(i as u64)) {
                Ok(curve) => RiskOracle { risk: curve[0], by_alpha: curve[1..].to_vec(), error: None },
                Err(e) => {
                    let nan = OracleEstimate::exact(f64::NAN);
                    RiskOracle { risk: nan, by_alpha: vec![nan; alphas.len()], error: Some(format!("oracle: {e}")) }
                }
            }
        })
        .collect()
}

// an estimator failure takes precedence over an oracle failure
fn row_status(value: &std::result::Result<f64, String>, oracle: &RiskOracle) -> String {
    match (value, &oracle.error) {
        (Err(e), _) => e.clone(),
        (Ok(_), Some(e)) => e.clone(),
        (Ok(_), None) => "ok".into(),
    }
}

fn status_of<T>(r: &std::result::Result<T, String>) -> String {
    match r {
        Ok(_) => "ok".into(),
        Err(e) => e.clone(),
    }
}

/// Groups rows by `(predictor, estimator, alpha)` in order of first appearance.
fn summarise(rows: &[ResultRow], oracle: impl Fn(&str, f64) -> (OracleEstimate, OracleEstimate)) -> Vec<SummaryRow> {
    let mut order: Vec<(String, String, u64)> = Vec::new();
    let mut groups: HashMap<(String, String, u64), Vec<f64>> = HashMap::new();
    for r in rows {
        let key = (r.predictor.clone(), r.estimator.clone(), r.alpha.to_bits());
        let slot = groups.entry(key.clone()).or_insert_with(|| {
            order.push(key);
            Vec::new()
        });
        if let Some(v) = r.estimate {
            slot.push(v);
        }
    }
    order
        .into_iter()
        .map(|key| {
            let vals = &groups[&key];
            let alpha = f64::from_bits(key.2);
            let (risk, risk_alpha) = oracle(&key.0, alpha);
            let sd = if vals.len() > 1 { std_dev(vals) } else { f64::NAN };
            SummaryRow {
                scenario: rows[0].scenario.clone(),
                predictor: key.0,
                estimator: key.1,
                alpha,
                count: vals.len(),
                mean: if vals.is_empty() { f64::NAN } else { mean(vals) },
                se: sd / (vals.len() as f64).sqrt(),
                sd,
                oracle_risk: risk.value,
                oracle_risk_se: risk.std_error,
                oracle_risk_alpha: risk_alpha.value,
                oracle_risk_alpha_se: risk_alpha.std_error,
            }
        })
        .collect()
}

/// CB and BY on shared draws for every predictor, alpha and repetition.
pub fn run_risk_table(cfg: &ExperimentConfig, predictors: &[Predictor]) -> Result<RiskTable> {
    cfg.validate()?;
    if predictors.is_empty() {
        return Err(Error::Config("no predictors configured".into()));
    }
    let hash = cfg.hash();
    let root = RngSeed::new(cfg.seed);
    let truth = build_scenario(cfg, root.substream(DESIGN))?;
    let model = truth.model()?;
    let ctx = truth.context()?;
    let sigma2 = truth.sigma2;
    let oracles = risk_oracles(&model, predictors, Some(&ctx), &cfg.alphas, cfg.oracle_reps, root.substream(ORACLE));

    let per_rep = try_map_range(cfg.resolved().reps, |rep| {
        let y = model.sample_data(root.path(&[DATA, rep as u64]));
        let gys: Vec<std::result::Result<Vec<f64>, String>> =
            predictors.iter().map(|g| g.predict(&y, Some(&ctx)).map_err(|e| e.to_string())).collect();
        let mut rows = Vec::with_capacity(2 * predictors.len() * cfg.alphas.len());
        for (ai, &alpha) in cfg.alphas.iter().enumerate() {
            let draws = make_coupled_draws(&y, sigma2, alpha, cfg.b, root.path(&[DRAWS, rep as u64, ai as u64]))?;
            let checksum = draws.checksum();
            for (pi, g) in predictors.iter().enumerate() {
                let fits = fit_draws(&draws, g, Some(&ctx)).map_err(|e| e.to_string());
                let cb = fits.as_ref().map_err(|e| e.clone()).and_then(|f| {
                    cb_risk_from_fits(&draws, f, sigma2, Variant::CbDefault).map(|e| e.value).map_err(|e| e.to_string())
                });
                let by = fits.and_then(|f| {
                    let gy = gys[pi].as_ref().map_err(|e| e.clone())?;
                    by_risk_from_fits(&draws, &f, gy, sigma2, Variant::ByCovariance)
                        .map(|e| e.value)
                        .map_err(|e| e.to_string())
                });
                let (risk, risk_alpha) = (oracles[pi].risk, oracles[pi].by_alpha[ai]);
                for (est, value) in [(Estimator::Cb, cb), (Estimator::By, by)] {
                    rows.push(ResultRow {
                        scenario: cfg.name.clone(),
                        predictor: g.to_string(),
                        estimator: est.name().into(),
                        alpha,
                        rep,
                        status: row_status(&value, &oracles[pi]),
                        estimate: value.ok(),
                        oracle_risk: risk.value,
                        oracle_risk_alpha: risk_alpha.value,
                        draw_checksum: checksum.clone(),
                        config_hash: hash.clone(),
                    });
                }
            }
        }
        Ok::<_, Error>(rows)
    })?;
    let rows: Vec<ResultRow> = per_rep.into_iter().flatten().collect();
    let failures = rows.iter().filter(|r| r.status != "ok").count();
    let names: Vec<String> = predictors.iter().map(|g| g.to_string()).collect();
    let summary = summarise(&rows, |p, a| {
        let i = names.iter().position(|n| n == p).expect("known predictor");
        oracles[i].at(&cfg.alphas, a)
    });
    Ok(RiskTable { rows, summary, failures })
}

/// CB and BY for the configured predictors (fixed ridge, lasso, stepwise and
/// cross-validated lasso by default) on a sparse low-SNR scenario.
pub fn run_figure1(cfg: &ExperimentConfig) -> Result<RiskTable> {
    run_risk_table(cfg, &cfg.predictors)
}

/// CB and BY for the cross-validated lasso only; the summary carries the
/// spread of both estimators at each alpha.
pub fn run_figure2(cfg: &ExperimentConfig) -> Result<RiskTable> {
    let mut gs: Vec<Predictor> = cfg.predictors.iter().filter(|g| matches!(g, Predictor::LassoCv(_))).cloned().collect();
    if gs.is_empty() {
        gs.push("lasso_cv".parse()?);
    }
    run_risk_table(cfg, &gs)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DfRow {
    pub scenario: String,
    pub predictor: String,
    pub estimator: String,
    pub alpha: f64,
    pub rep: usize,
    pub estimate: Option<f64>,
    /// Active set size of the fit at the observed data.
    pub support_size: Option<f64>,
    pub oracle_df: f64,
    pub oracle_df_alpha: f64,
    pub draw_checksum: String,
    pub status: String,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DfSummaryRow {
    pub predictor: String,
    pub estimator: String,
    pub alpha: f64,
    pub count: usize,
    pub mean: f64,
    pub se: f64,
    pub mean_support: f64,
    /// Degrees of freedom at the original noise level.
    pub oracle_df: f64,
    pub oracle_df_se: f64,
    /// Degrees of freedom at the elevated noise level.
    pub oracle_df_alpha: f64,
    pub oracle_df_alpha_se: f64,
}

#[derive(Debug, Clone)]
pub struct DfTable {
    pub rows: Vec<DfRow>,
    pub summary: Vec<DfSummaryRow>,
    pub failures: usize,
}

/// Lasso penalties and stepwise sizes of the degrees-of-freedom path. The
/// lasso grid starts at `lambda_max` of the first repetition's data.
pub fn df_path(cfg: &ExperimentConfig, x: &nalgebra::DMatrix<f64>, pilot: &[f64]) -> Vec<Predictor> {
    let hi = lambda_max(x, pilot);
    let mut path: Vec<Predictor> = log_spaced(hi, hi * cfg.df.min_ratio, cfg.df.path_len)
        .into_iter()
        .map(|lambda| Predictor::Lasso { lambda })
        .collect();
    let k_max = cfg.df.max_steps.min(x.nrows()).min(x.ncols());
    path.extend((0..=k_max).map(|k| Predictor::ForwardStepwise { k }));
    path
}

fn support_size(g: &Predictor, y: &[f64], ctx: &DesignContext) -> Result<f64> {
    match g {
        Predictor::ForwardStepwise { k } => Ok(*k as f64),
        _ => g.divergence(y, Some(ctx)),
    }
}

/// CB and Ye degrees of freedom along the lasso and stepwise paths, with the
/// Monte Carlo degrees of freedom of every path point.
pub fn run_df_figure(cfg: &ExperimentConfig) -> Result<DfTable> {
    cfg.validate()?;
    let hash = cfg.hash();
    let root = RngSeed::new(cfg.seed);
    let truth = build_scenario(cfg, root.substream(DESIGN))?;
    let model = truth.model()?;
    let ctx = truth.context()?;
    let sigma2 = truth.sigma2;
    let path = df_path(cfg, &truth.x, &model.sample_data(root.path(&[DATA, 0])));

    let oracles: Vec<(OracleEstimate, Vec<OracleEstimate>)> = path
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let seed = root.path(&[ORACLE, i as u64]);
            let df0 = mc_df(&model, g, Some(&ctx), 0.0, cfg.oracle_reps, seed)?;
            let dfa = cfg
                .alphas
                .iter()
                .map(|a| mc_df(&model, g, Some(&ctx), *a, cfg.oracle_reps, seed))
                .collect::<Result<Vec<_>>>()?;
            Ok((df0, dfa))
        })
        .collect::<Result<_>>()?;

    let per_rep = try_map_range(cfg.resolved().reps, |rep| {
        let y = model.sample_data(root.path(&[DATA, rep as u64]));
        let mut rows = Vec::new();
        for (ai, &alpha) in cfg.alphas.iter().enumerate() {
            let draws = make_coupled_draws(&y, sigma2, alpha, cfg.b, root.path(&[DRAWS, rep as u64, ai as u64]))?;
            let checksum = draws.checksum();
            for (pi, g) in path.iter().enumerate() {
                let support = support_size(g, &y, &ctx).ok();
                let fits = fit_draws(&draws, g, Some(&ctx)).map_err(|e| e.to_string());
                let cb = fits.as_ref().map_err(|e| e.clone()).and_then(|f| cb_df_from_fits(&draws, f, sigma2).map(|d| d.value).map_err(|e| e.to_string()));
                let ye = fits.and_then(|f| {
                    ye_df_from_fits(&draws, &f, sigma2, false).map(|d| d.value).map_err(|e| e.to_string())
                });
                for (name, value) in [("cb_df", cb), ("ye_df", ye)] {
                    rows.push(DfRow {
                        scenario: cfg.name.clone(),
                        predictor: g.to_string(),
                        estimator: name.into(),
                        alpha,
                        rep,
                        status: status_of(&value),
                        estimate: value.ok(),
                        support_size: support,
                        oracle_df: oracles[pi].0.value,
                        oracle_df_alpha: oracles[pi].1[ai].value,
                        draw_checksum: checksum.clone(),
                        config_hash: hash.clone(),
                    });
                }
            }
        }
        Ok::<_, Error>(rows)
    })?;
    let rows: Vec<DfRow> = per_rep.into_iter().flatten().collect();
    let failures = rows.iter().filter(|r| r.estimate.is_none()).count();

    let mut summary = Vec::new();
    for (ai, &alpha) in cfg.alphas.iter().enumerate() {
        for (pi, g) in path.iter().enumerate() {
            let name = g.to_string();
            for est in ["cb_df", "ye_df"] {
                let sel: Vec<&DfRow> =
                    rows.iter().filter(|r| r.alpha == alpha && r.predictor == name && r.estimator == est).collect();
                let vals: Vec<f64> = sel.iter().filter_map(|r| r.estimate).collect();
                let supports: Vec<f64> = sel.iter().filter_map(|r| r.support_size).collect();
                let e = if vals.len() > 1 { OracleEstimate::from_samples(&vals) } else { OracleEstimate::exact(f64::NAN) };
                summary.push(DfSummaryRow {
                    predictor: name.clone(),
                    estimator: est.into(),
                    alpha,
                    count: vals.len(),
                    mean: e.value,
                    se: e.std_error,
                    mean_support: if supports.is_empty() { f64::NAN } else { mean(&supports) },
                    oracle_df: oracles[pi].0.value,
                    oracle_df_se: oracles[pi].0.std_error,
                    oracle_df_alpha: oracles[pi].1[ai].value,
                    oracle_df_alpha_se: oracles[pi].1[ai].std_error,
                });
            }
        }
    }
    Ok(DfTable { rows, summary, failures })
}

/// Piecewise constant signal of length `n` with equal-length segments.
pub fn step_signal(n: usize, levels: &[f64]) -> Vec<f64> {
    (0..n).map(|j| levels[j * levels.len() / n]).collect()
}

/// Which tuning curve picked a penalty, and how good the pick is.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionRow {
    /// `sure` or `cb`.
    pub curve: String,
    /// Zero for SURE.
    pub alpha: f64,
    /// Minimiser of the curve averaged over repetitions.
    pub mean_curve_lambda: f64,
    pub mean_curve_oracle_risk: f64,
    /// Oracle risk of the per-repetition minimiser, averaged over repetitions.
    pub per_rep_oracle_risk: f64,
    pub per_rep_oracle_risk_se: f64,
    /// `per_rep_oracle_risk` over the same quantity for SURE.
    pub ratio_to_sure: f64,
}

#[derive(Debug, Clone)]
pub struct DenoiseTable {
    pub lambdas: Vec<f64>,
    pub sigma2: f64,
    pub rows: Vec<ResultRow>,
    pub summary: Vec<SummaryRow>,
    pub selections: Vec<SelectionRow>,
    pub failures: usize,
}

fn argmin(vals: &[Option<f64>]) -> Option<usize> {
    vals.iter()
        .enumerate()
        .filter_map(|(i, v)| v.map(|v| (i, v)))
        .fold(None, |best: Option<(usize, f64)>, (i, v)| match best {
            Some((_, b)) if b <= v => best,
            _ => Some((i, v)),
        })
        .map(|(i, _)| i)
}

/// SURE and CB tuning curves of the 1-D fused lasso on a noisy step signal.
pub fn run_denoise(cfg: &ExperimentConfig) -> Result<DenoiseTable> {
    cfg.validate()?;
    let d = &cfg.denoise;
    let n = cfg.resolved().n;
    if d.levels.is_empty() || d.levels.len() > n {
        return Err(Error::Config("denoise levels must be non-empty and at most n".into()));
    }
    if !(d.lambda_lo > 0.0 && d.lambda_hi > d.lambda_lo) || d.lambda_count < 2 {
        return Err(Error::Config("denoise penalty grid needs 0 < lambda_lo < lambda_hi and 2 or more points".into()));
    }
    let hash = cfg.hash();
    let root = RngSeed::new(cfg.seed);
    let signal = step_signal(n, &d.levels);
    let sigma2 = sigma2_for_snr(&signal, cfg.snr)?;
    let model = NormalModel::new(signal, sigma2)?;
    let sigma = sigma2.sqrt();
    let mut lambdas = log_spaced(d.lambda_hi * sigma, d.lambda_lo * sigma, d.lambda_count);
    lambdas.push(0.0);
    lambdas.reverse();
    let gs: Vec<Predictor> = lambdas.iter().map(|&lambda| Predictor::FusedLasso1d { lambda }).collect();
    let oracles = risk_oracles(&model, &gs, None, &cfg.alphas, cfg.oracle_reps, root.substream(ORACLE));

    struct Rep {
        rows: Vec<ResultRow>,
        sure: Vec<Option<f64>>,
        cb: Vec<Vec<Option<f64>>>,
    }
    let reps = try_map_range(cfg.resolved().reps, |rep| {
        let y = model.sample_data(root.path(&[DATA, rep as u64]));
        let mut rows = Vec::new();
        let mut push = |g: &Predictor, est: &str, alpha: f64, value: std::result::Result<f64, String>, risk_alpha: f64, checksum: &str| {
            let i = gs.iter().position(|h| h == g).expect("grid predictor");
            rows.push(ResultRow {
                scenario: cfg.name.clone(),
                predictor: g.to_string(),
                estimator: est.into(),
                alpha,
                rep,
                status: row_status(&value, &oracles[i]),
                estimate: value.ok(),
                oracle_risk: oracles[i].risk.value,
                oracle_risk_alpha: risk_alpha,
                draw_checksum: checksum.into(),
                config_hash: hash.clone(),
            });
        };
        let mut sure_curve = Vec::with_capacity(gs.len());
        for (li, g) in gs.iter().enumerate() {
            let v = sure(&y, g, None, sigma2).map(|e| e.value).map_err(|e| e.to_string());
            sure_curve.push(v.as_ref().ok().copied());
            push(g, Estimator::Sure.name(), 0.0, v, oracles[li].risk.value, "");
        }
        let mut cb_curves = Vec::with_capacity(cfg.alphas.len());
        for (ai, &alpha) in cfg.alphas.iter().enumerate() {
            let draws = make_coupled_draws(&y, sigma2, alpha, cfg.b, root.path(&[DRAWS, rep as u64, ai as u64]))?;
            let checksum = draws.checksum();
            let mut curve = Vec::with_capacity(gs.len());
            for (li, g) in gs.iter().enumerate() {
                let v = fit_draws(&draws, g, None)
                    .and_then(|f| cb_risk_from_fits(&draws, &f, sigma2, Variant::CbDefault))
                    .map(|e| e.value)
                    .map_err(|e| e.to_string());
                curve.push(v.as_ref().ok().copied());
                push(g, Estimator::Cb.name(), alpha, v, oracles[li].by_alpha[ai].value, &checksum);
            }
            cb_curves.push(curve);
        }
        Ok::<_, Error>(Rep { rows, sure: sure_curve, cb: cb_curves })
    })?;

    let risk_of = |i: usize| oracles[i].risk.value;
    let select = |curve: &str, alpha: f64, pick: &dyn Fn(&Rep) -> &Vec<Option<f64>>| -> Result<(SelectionRow, f64)> {
        let per_rep: Vec<f64> = reps.iter().filter_map(|r| argmin(pick(r))).map(risk_of).collect();
        if per_rep.len() < 2 {
            return Err(Error::NonFinite(format!("{curve} curve has no finite minimiser")));
        }
        let mean_curve: Vec<Option<f64>> = (0..gs.len())
            .map(|li| {
                let vals: Vec<f64> = reps.iter().filter_map(|r| pick(r)[li]).collect();
                (!vals.is_empty()).then(|| mean(&vals))
            })
            .collect();
        let best = argmin(&mean_curve).expect("non-empty curve");
        let e = OracleEstimate::from_samples(&per_rep);
        Ok((
            SelectionRow {
                curve: curve.into(),
                alpha,
                mean_curve_lambda: lambdas[best],
                mean_curve_oracle_risk: risk_of(best),
                per_rep_oracle_risk: e.value,
                per_rep_oracle_risk_se: e.std_error,
                ratio_to_sure: f64::NAN,
            },
            e.value,
        ))
    };
    let (mut sure_row, sure_risk) = select("sure", 0.0, &|r: &Rep| &r.sure)?;
    sure_row.ratio_to_sure = 1.0;
    let mut selections = vec![sure_row];
    for (ai, &alpha) in cfg.alphas.iter().enumerate() {
        let (mut row, risk) = select("cb", alpha, &|r: &Rep| &r.cb[ai])?;
        row.ratio_to_sure = risk / sure_risk;
        selections.push(row);
    }

    let rows: Vec<ResultRow> = reps.into_iter().flat_map(|r| r.rows).collect();
    let failures = rows.iter().filter(|r| r.status != "ok").count();
    let names: Vec<String> = gs.iter().map(|g| g.to_string()).collect();
    let summary = summarise(&rows, |p, a| {
        let i = names.iter().position(|n| n == p).expect("known predictor");
        oracles[i].at(&cfg.alphas, a)
    });
    Ok(DenoiseTable { lambdas, sigma2, rows, summary, selections, failures })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasRow {
    pub predictor: String,
    pub alpha: f64,
    /// `Risk_alpha - Risk`, the bias of CB for the original risk.
    pub true_bias: f64,
    pub true_bias_se: f64,
    pub var_alpha: f64,
    pub var_zero: f64,
    pub bound_bd1: f64,
    pub bound_bd2_leading: f64,
    pub relative_bound: f64,
    pub dominated: bool,
    /// Loss variance is non-decreasing in alpha (within noise) on this curve.
    pub premise_holds: bool,
}

/// Bias of CB against its two bounds for forward stepwise at each configured size.
pub fn run_bias_table(cfg: &ExperimentConfig) -> Result<Vec<BiasRow>> {
    cfg.validate()?;
    let root = RngSeed::new(cfg.seed);
    let truth = build_scenario(cfg, root.substream(DESIGN))?;
    let model = truth.model()?;
    let ctx = truth.context()?;
    let mut rows = Vec::new();
    for (ki, &k) in cfg.variance.stepwise_ks.iter().enumerate() {
        if k > ctx.n().min(ctx.p()) {
            return Err(Error::Config(format!("stepwise size {k} exceeds min(n, p) = {}", ctx.n().min(ctx.p()))));
        }
        let g = Predictor::ForwardStepwise { k };
        let curve = bias_bounds_curve(&model, &g, Some(&ctx), &cfg.alphas, cfg.oracle_reps, root.path(&[STUDY, ki as u64]))?;
        rows.extend(curve.points.iter().map(|b| BiasRow {
            predictor: g.to_string(),
            alpha: b.alpha,
            true_bias: b.true_bias.value,
            true_bias_se: b.true_bias.std_error,
            var_alpha: b.var_alpha,
            var_zero: b.var_zero,
            bound_bd1: b.bound_bd1,
            bound_bd2_leading: b.bound_bd2_leading,
            relative_bound: b.relative_bound,
            dominated: b.dominated(),
            premise_holds: curve.premise_holds,
        }));
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RvarRow {
    pub predictor: String,
    pub alpha: f64,
    pub b: usize,
    pub inv_b_alpha: f64,
    pub measured_rvar: f64,
    pub measured_rvar_se: f64,
    /// `4 sigma2 E||y - g(y)||^2 / (B alpha)`
    pub leading_term: f64,
    pub leading_term_se: f64,
}

#[derive(Debug, Clone)]
pub struct RvarTable {
    pub rows: Vec<RvarRow>,
    /// Slope of `log RVar` on `log(1 / (B alpha))`.
    pub slope: f64,
}

/// Measured reducible variance of CB over the `(B, alpha)` grid for the
/// first configured predictor.
pub fn run_rvar_table(cfg: &ExperimentConfig) -> Result<RvarTable> {
    cfg.validate()?;
    let g = cfg.predictors.first().ok_or_else(|| Error::Config("no predictor configured".into()))?;
    let bs = &cfg.variance.b_grid;
    if bs.is_empty() || bs.iter().any(|b| *b == 0) {
        return Err(Error::Config("b_grid must hold positive sizes".into()));
    }
    let root = RngSeed::new(cfg.seed);
    let truth = build_scenario(cfg, root.substream(DESIGN))?;
    let model = truth.model()?;
    let ctx = truth.context()?;
    let mut rows = Vec::new();
    for (ai, &alpha) in cfg.alphas.iter().enumerate() {
        let seed = root.path(&[STUDY, ai as u64]);
        let measured = measured_rvar(&model, g, Some(&ctx), alpha, bs, cfg.resolved().reps, cfg.variance.groups, seed)?;
        for (m, &b) in measured.iter().zip(bs) {
            let lead = rvar_leading_terms(&model, g, None, Some(&ctx), alpha, b, cfg.oracle_reps, root.substream(ORACLE))?;
            rows.push(RvarRow {
                predictor: g.to_string(),
                alpha,
                b,
                inv_b_alpha: 1.0 / (b as f64 * alpha),
                measured_rvar: m.value,
                measured_rvar_se: m.std_error,
                leading_term: lead.cb_term.value,
                leading_term_se: lead.cb_term.std_error,
            });
        }
    }
    let usable: Vec<&RvarRow> = rows.iter().filter(|r| r.measured_rvar > 0.0).collect();
    let slope = if usable.len() >= 2 {
        let x: Vec<f64> = usable.iter().map(|r| r.inv_b_alpha.ln()).collect();
        let y: Vec<f64> = usable.iter().map(|r| r.measured_rvar.ln()).collect();
        ols_slope(&x, &y)
    } else {
        f64::NAN
    };
    Ok(RvarTable { rows, slope })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IvarRow {
    pub predictor: String,
    pub estimator: String,
    pub alpha: f64,
    pub b: usize,
    pub risk: f64,
    pub risk_se: f64,
    pub risk_alpha: f64,
    pub risk_alpha_se: f64,
    pub bias: f64,
    pub bias_se: f64,
    pub rvar: f64,
    pub ivar: f64,
    pub ivar_se: f64,
    pub ivar1: f64,
    pub ivar1_se: f64,
    pub ivar2: f64,
    pub ivar2_se: f64,
    pub cov12: f64,
    pub cov12_se: f64,
    pub mse: f64,
    pub mse_se: f64,
}

/// Bias and variance components of CB and BY for the first configured
/// predictor. The two estimators use independent data and draws.
pub fn run_ivar_table(cfg: &ExperimentConfig) -> Result<Vec<IvarRow>> {
    cfg.validate()?;
    let g = cfg.predictors.first().ok_or_else(|| Error::Config("no predictor configured".into()))?;
    let root = RngSeed::new(cfg.seed);
    let truth = build_scenario(cfg, root.substream(DESIGN))?;
    let model = truth.model()?;
    let ctx = truth.context()?;
    let mut rows = Vec::new();
    for (ai, &alpha) in cfg.alphas.iter().enumerate() {
        for (ei, est) in [Estimator::Cb, Estimator::By].into_iter().enumerate() {
            let study = VarianceStudy {
                alpha,
                b: cfg.b,
                r_outer: cfg.resolved().reps,
                b_inner: cfg.variance.b_inner.max(cfg.b),
                r_oracle: cfg.oracle_reps,
            };
            let r = bias_variance_report(&model, g, Some(&ctx), study, est, root.path(&[STUDY, ai as u64, ei as u64]))?;
            rows.push(IvarRow {
                predictor: g.to_string(),
                estimator: est.name().into(),
                alpha,
                b: cfg.b,
                risk: r.risk.value,
                risk_se: r.risk.std_error,
                risk_alpha: r.risk_alpha.value,
                risk_alpha_se: r.risk_alpha.std_error,
                bias: r.bias,
                bias_se: r.bias_se,
                rvar: r.rvar,
                ivar: r.ivar,
                ivar_se: r.ivar_se,
                ivar1: r.ivar1,
                ivar1_se: r.ivar1_se,
                ivar2: r.ivar2,
                ivar2_se: r.ivar2_se,
                cov12: r.cov12,
                cov12_se: r.cov12_se,
                mse: r.mse,
                mse_se: r.mse_se,
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone)]
pub struct AppendixTables {
    pub bias: Vec<BiasRow>,
    pub rvar: RvarTable,
    pub ivar: Vec<IvarRow>,
}

pub fn run_appendix_f(cfg: &AppendixConfig) -> Result<AppendixTables> {
    Ok(AppendixTables { bias: run_bias_table(&cfg.bias)?, rvar: run_rvar_table(&cfg.rvar)?, ivar: run_ivar_table(&cfg.ivar)? })
}
