//! `riskest`: coupled bootstrap risk estimation from the command line.

mod analyze;
mod config;
mod data;
mod error;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cbrisk::estimators::{
    by_risk, cb_df, cb_risk, efron_risk, sure, ye_df, DfEstimate, RiskEstimate, Variant,
};
use cbrisk::harness::run_and_write;
use cbrisk::model::make_coupled_draws;
use cbrisk::stats::{mean, std_dev};
use cbrisk::{DesignContext, Predictor, RngSeed};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::error::CliError;

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  1  I/O error
  2  parse error or invalid argument
  3  dimension mismatch or missing design matrix
  4  solver failure, or an experiment with failed rows";

#[derive(Parser)]
#[command(name = "riskest", version, about = "Coupled bootstrap risk estimation", after_help = EXIT_CODES)]
struct Cli {
    /// Worker threads, or `auto`. Never changes numeric output.
    #[arg(long, global = true, default_value = "auto")]
    threads: String,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the risk of a rule on one data vector; prints JSON.
    Estimate(EstimateArgs),
    /// Estimate degrees of freedom of a rule on one data vector; prints JSON.
    Df(DfArgs),
    /// Write Stein, optimism, bias-bound and hard-threshold tables.
    Analyze(RunArgs),
    /// Run a simulation experiment; prints the CSV paths written.
    Experiment(RunArgs),
    /// Run the fused lasso denoising experiment; prints the CSV paths written.
    Denoise(RunArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Data vector: one number per line, optionally under a header.
    #[arg(long)]
    data: PathBuf,
    /// Design matrix as CSV, needed by the regression rules.
    #[arg(long)]
    design: Option<PathBuf>,
    /// Rule spec such as `identity`, `soft:1`, `lasso:0.31`, `lasso_cv`.
    #[arg(long)]
    predictor: String,
    /// Noise variance.
    #[arg(long)]
    sigma2: f64,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    /// Number of bootstrap draws.
    #[arg(long = "B", default_value_t = 100)]
    b: usize,
    #[arg(long, env = "RISKEST_SEED", default_value_t = 1)]
    seed: u64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EstimatorArg {
    Cb,
    By,
    Efron,
    Sure,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Defaults to the estimator of `--variant`, else `cb`.
    #[arg(long, value_enum)]
    estimator: Option<EstimatorArg>,
    /// cb_default, cb_raw_pair, cb_exact_mean, by_covariance,
    /// by_breiman_increment or by_ye_per_coordinate.
    #[arg(long)]
    variant: Option<String>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DfMethodArg {
    Cb,
    Ye,
    YePerCoordinate,
    Sure,
}

#[derive(Args)]
struct DfArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum, default_value = "cb")]
    method: DfMethodArg,
}

#[derive(Args)]
struct RunArgs {
    /// Config file, or the name of a bundled config (figure1.desk,
    /// figure2.desk, df, denoise, appendixF, analyze).
    #[arg(long)]
    config: Option<String>,
    /// Override a config entry, `key=value` with dotted keys for sections.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory.
    #[arg(long, default_value = "results")]
    out: PathBuf,
    #[arg(long, env = "RISKEST_SEED")]
    seed: Option<u64>,
}

const VARIANTS: [Variant; 6] = [
    Variant::CbDefault,
    Variant::CbRawPair,
    Variant::CbExactMean,
    Variant::ByCovariance,
    Variant::ByBreimanIncrement,
    Variant::ByYePerCoordinate,
];

fn parse_variant(s: &str) -> Result<Variant, CliError> {
    VARIANTS.into_iter().find(|v| v.name() == s).ok_or_else(|| {
        let names: Vec<&str> = VARIANTS.iter().map(|v| v.name()).collect();
        CliError::Parse(format!("unknown variant `{s}`, expected one of {}", names.join(", ")))
    })
}

struct Problem {
    y: Vec<f64>,
    g: Predictor,
    ctx: Option<DesignContext>,
}

fn load_problem(a: &DataArgs) -> Result<Problem, CliError> {
    let y = data::read_vector(&a.data)?;
    let g: Predictor = a.predictor.parse()?;
    let ctx = match &a.design {
        Some(path) => {
            let x = data::read_matrix(path)?;
            if x.nrows() != y.len() {
                return Err(CliError::Dimension(format!(
                    "design has {} rows but the data vector has {} entries",
                    x.nrows(),
                    y.len()
                )));
            }
            Some(DesignContext::new(x, None)?)
        }
        None if g.needs_design() => {
            return Err(CliError::Dimension(format!("predictor `{g}` needs a design matrix (--design)")));
        }
        None => None,
    };
    if !(a.sigma2 > 0.0 && a.sigma2.is_finite()) {
        return Err(CliError::Parse(format!("--sigma2 must be positive, got {}", a.sigma2)));
    }
    Ok(Problem { y, g, ctx })
}

fn per_draw_summary(e: &RiskEstimate) -> Value {
    match &e.per_draw {
        Some(v) if !v.is_empty() => json!({
            "count": v.len(),
            "mean": mean(v),
            "sd": if v.len() > 1 { std_dev(v) } else { 0.0 },
            "se": if v.len() > 1 { std_dev(v) / (v.len() as f64).sqrt() } else { 0.0 },
            "min": v.iter().copied().fold(f64::INFINITY, f64::min),
            "max": v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }),
        _ => Value::Null,
    }
}

fn cmd_estimate(a: &EstimateArgs) -> Result<Value, CliError> {
    let variant = a.variant.as_deref().map(parse_variant).transpose()?;
    let estimator = match (a.estimator, variant) {
        (Some(e), _) => e,
        (None, Some(v)) if v.is_cb() => EstimatorArg::Cb,
        (None, Some(_)) => EstimatorArg::By,
        (None, None) => EstimatorArg::Cb,
    };
    let compatible = match (estimator, variant) {
        (_, None) => true,
        (EstimatorArg::Cb, Some(v)) => v.is_cb(),
        (EstimatorArg::By, Some(v)) => !v.is_cb(),
        _ => false,
    };
    if !compatible {
        return Err(CliError::Parse("--variant does not belong to the chosen --estimator".into()));
    }
    let d = &a.data;
    let p = load_problem(d)?;
    let ctx = p.ctx.as_ref();
    let est = match estimator {
        EstimatorArg::Sure => sure(&p.y, &p.g, ctx, d.sigma2)?,
        _ => {
            let draws = make_coupled_draws(&p.y, d.sigma2, d.alpha, d.b, RngSeed::new(d.seed))?;
            match estimator {
                EstimatorArg::Cb => cb_risk(&draws, &p.g, ctx, d.sigma2, variant.unwrap_or(Variant::CbDefault))?,
                EstimatorArg::By => by_risk(&draws, &p.g, ctx, d.sigma2, variant.unwrap_or(Variant::ByCovariance))?,
                _ => efron_risk(&draws, &p.g, ctx, d.sigma2)?,
            }
        }
    };
    let is_sure = estimator == EstimatorArg::Sure;
    Ok(json!({
        "estimator": est.estimator.name(),
        "predictor": p.g.to_string(),
        "value": est.value,
        "alpha": if is_sure { Value::Null } else { json!(est.alpha) },
        "B": if is_sure { Value::Null } else { json!(est.b) },
        "variant": est.variant.map(|v| v.name()),
        "n": p.y.len(),
        "sigma2": d.sigma2,
        "seed": d.seed,
        "per_draw_summary": per_draw_summary(&est),
    }))
}

fn cmd_df(a: &DfArgs) -> Result<Value, CliError> {
    let d = &a.data;
    let p = load_problem(d)?;
    let ctx = p.ctx.as_ref();
    let (value, alpha): (f64, Option<f64>) = if a.method == DfMethodArg::Sure {
        (p.g.divergence(&p.y, ctx)?, None)
    } else {
        let draws = make_coupled_draws(&p.y, d.sigma2, d.alpha, d.b, RngSeed::new(d.seed))?;
        let e: DfEstimate = match a.method {
            DfMethodArg::Cb => cb_df(&draws, &p.g, ctx, d.sigma2)?,
            DfMethodArg::Ye => ye_df(&draws, &p.g, ctx, d.sigma2, false)?,
            _ => ye_df(&draws, &p.g, ctx, d.sigma2, true)?,
        };
        (e.value, Some(e.alpha))
    };
    let method = match a.method {
        DfMethodArg::Cb => "cb_df",
        DfMethodArg::Ye => "ye_df",
        DfMethodArg::YePerCoordinate => "ye_df_per_coordinate",
        DfMethodArg::Sure => "divergence",
    };
    Ok(json!({
        "method": method,
        "predictor": p.g.to_string(),
        "value": value,
        "alpha": alpha,
        "B": alpha.map(|_| d.b),
        "n": p.y.len(),
        "sigma2": d.sigma2,
        "seed": d.seed,
    }))
}

// A closed pipe on stdout is not an error worth a panic.
fn out(text: &str) {
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn print_paths(files: &[PathBuf]) {
    for f in files {
        out(&f.display().to_string());
    }
}

fn cmd_experiment(a: &RunArgs, kind: Option<&str>) -> Result<(), CliError> {
    let source = match (&a.config, kind) {
        (Some(c), _) => c.as_str(),
        (None, Some(k)) => k,
        (None, None) => return Err(CliError::Parse("--config is required".into())),
    };
    let spec = config::load_spec(source, kind, &a.set, a.seed)?;
    let report = run_and_write(&spec, &a.out)?;
    print_paths(&report.files);
    if report.failed_rows > 0 {
        return Err(CliError::Solver(format!(
            "{} rows failed; see the status column and {}",
            report.failed_rows,
            report.sidecar.display()
        )));
    }
    Ok(())
}

fn cmd_analyze(a: &RunArgs) -> Result<(), CliError> {
    let mut doc = config::load_document(a.config.as_deref().unwrap_or("analyze"))?;
    config::override_document(&mut doc, &a.set)?;
    let mut cfg = analyze::AnalyzeConfig::from_json(doc)?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let files = analyze::run(&cfg, Path::new(&a.out))?;
    print_paths(&files);
    Ok(())
}

fn set_threads(spec: &str) -> Result<(), CliError> {
    if spec == "auto" {
        return Ok(());
    }
    let n: usize = spec
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Parse(format!("--threads must be a positive integer or `auto`, got `{spec}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Io(format!("cannot size the thread pool: {e}")))
}

fn run(cli: &Cli) -> Result<(), CliError> {
    set_threads(&cli.threads)?;
    let emit = |v: Value| out(&serde_json::to_string_pretty(&v).expect("json"));
    match &cli.command {
        Command::Estimate(a) => emit(cmd_estimate(a)?),
        Command::Df(a) => emit(cmd_df(a)?),
        Command::Analyze(a) => cmd_analyze(a)?,
        Command::Experiment(a) => cmd_experiment(a, None)?,
        Command::Denoise(a) => cmd_experiment(a, Some("denoise"))?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("riskest: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
