use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::ExperimentSpec;
use super::experiments::{run_appendix_f, run_denoise, run_df_figure, run_figure1, run_figure2};
use crate::error::Result;

/// Writes `rows` as a comma separated table with a header row.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
struct Sidecar<'a> {
    experiment: &'static str,
    config_hash: String,
    resolved: Vec<super::config::Resolved>,
    failed_rows: usize,
    files: &'a [PathBuf],
    config: &'a ExperimentSpec,
}

/// Files written by one run and the number of rows whose fit failed.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub files: Vec<PathBuf>,
    pub sidecar: PathBuf,
    pub failed_rows: usize,
}

/// Runs an experiment and writes its tables as `<name>[_table].csv` plus a
/// `<name>.json` sidecar with the resolved configuration.
pub fn run_and_write(spec: &ExperimentSpec, out_dir: &Path) -> Result<RunReport> {
    spec.validate()?;
    fs::create_dir_all(out_dir)?;
    let stem = spec.name().to_string();
    let path = |suffix: &str| out_dir.join(format!("{stem}{suffix}.csv"));
    let mut files = Vec::new();
    let mut emit = |suffix: &str, write: &dyn Fn(&Path) -> Result<()>| -> Result<()> {
        let p = path(suffix);
        write(&p)?;
        files.push(p);
        Ok(())
    };
    let failed_rows = match spec {
        ExperimentSpec::Figure1(c) | ExperimentSpec::Figure2(c) => {
            let t = if matches!(spec, ExperimentSpec::Figure1(_)) { run_figure1(c)? } else { run_figure2(c)? };
            emit("", &|p| write_csv(p, &t.rows))?;
            emit("_summary", &|p| write_csv(p, &t.summary))?;
            t.failures
        }
        ExperimentSpec::DfPath(c) => {
            let t = run_df_figure(c)?;
            emit("", &|p| write_csv(p, &t.rows))?;
            emit("_summary", &|p| write_csv(p, &t.summary))?;
            t.failures
        }
        ExperimentSpec::Denoise(c) => {
            let t = run_denoise(c)?;
            emit("", &|p| write_csv(p, &t.rows))?;
            emit("_summary", &|p| write_csv(p, &t.summary))?;
            emit("_selection", &|p| write_csv(p, &t.selections))?;
            t.failures
        }
        ExperimentSpec::Appendix(a) => {
            let t = run_appendix_f(a)?;
            emit("_bias", &|p| write_csv(p, &t.bias))?;
            emit("_rvar", &|p| write_csv(p, &t.rvar.rows))?;
            emit("_ivar", &|p| write_csv(p, &t.ivar))?;
            0
        }
    };
    let sidecar = out_dir.join(format!("{stem}.json"));
    write_json(
        &sidecar,
        &Sidecar {
            experiment: spec.kind(),
            config_hash: spec.hash(),
            resolved: spec.configs().iter().map(|c| c.resolved()).collect(),
            failed_rows,
            files: &files,
            config: spec,
        },
    )?;
    Ok(RunReport { files, sidecar, failed_rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> ExperimentSpec {
        let doc = serde_json::json!({
            "experiment": "figure1", "name": "smoke", "n": 12, "p": 6, "reps": 3, "B": 4,
            "alphas": [0.5], "oracle_reps": 50, "predictors": ["ridge:5", "soft:1"]
        });
        ExperimentSpec::from_json(doc).unwrap()
    }

    #[test]
    fn csv_layout_and_reproducibility() {
        let dir = std::env::temp_dir().join(format!("cbrisk-out-{}", std::process::id()));
        let a = run_and_write(&spec(), &dir.join("a")).unwrap();
        let b = run_and_write(&spec(), &dir.join("b")).unwrap();
        let text = fs::read_to_string(&a.files[0]).unwrap();
        let header = text.lines().next().unwrap();
        assert_eq!(
            header,
            "scenario,predictor,estimator,alpha,rep,estimate,oracle_risk,oracle_risk_alpha,draw_checksum,status,config_hash"
        );
        assert_eq!(text.lines().count(), 1 + 3 * 2 * 2);
        assert!(text.ends_with('\n') && !text.contains('\r'));
        for (x, y) in a.files.iter().zip(&b.files) {
            assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap());
        }
        let side: serde_json::Value = serde_json::from_str(&fs::read_to_string(&a.sidecar).unwrap()).unwrap();
        assert_eq!(side["experiment"], "figure1");
        assert_eq!(side["config"]["n"], 12);
        fs::remove_dir_all(&dir).unwrap();
    }
}
