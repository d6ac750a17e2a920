use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_riskest"));
    c.env_remove("RISKEST_SEED");
    c
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("riskest-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&d);
    fs::create_dir_all(&d).unwrap();
    d
}

/// Deterministic pseudo-normal entries from a small LCG, so fixtures do not
/// depend on the library under test.
fn fixture_values(count: usize, seed: u64) -> Vec<f64> {
    let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    (0..count)
        .map(|_| {
            let mut acc = 0.0;
            for _ in 0..12 {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                acc += (s >> 11) as f64 / (1u64 << 53) as f64;
            }
            acc - 6.0
        })
        .collect()
}

fn write_vector(dir: &Path, n: usize) -> PathBuf {
    let p = dir.join("y.txt");
    let body: String = fixture_values(n, 7).iter().map(|v| format!("{v}\n")).collect();
    fs::write(&p, format!("y\n{body}")).unwrap();
    p
}

fn write_design(dir: &Path, n: usize, p: usize) -> PathBuf {
    let path = dir.join(format!("x_{n}.csv"));
    let v = fixture_values(n * p, 11);
    let body: String = v.chunks(p).map(|r| r.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",") + "\n").collect();
    fs::write(&path, body).unwrap();
    path
}

fn json_of(o: &Output) -> Value {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).expect("stdout is JSON")
}

fn stdout_lines(o: &Output) -> Vec<String> {
    String::from_utf8_lossy(&o.stdout).lines().map(str::to_string).collect()
}

/// Rows of a CSV file as maps from column name to cell.
fn csv_rows(path: &str) -> Vec<std::collections::HashMap<String, String>> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    lines.map(|l| header.iter().map(|h| h.to_string()).zip(l.split(',').map(str::to_string)).collect()).collect()
}

#[test]
fn identity_estimate_matches_its_target() {
    let d = scratch("identity");
    let y = write_vector(&d, 100);
    let o = bin()
        .args(["estimate", "--predictor", "identity", "--sigma2", "1", "--alpha", "0.1", "--B", "100000"])
        .arg("--data")
        .arg(&y)
        .output()
        .unwrap();
    let v = json_of(&o);
    let target = 100.0 * 1.1;
    let value = v["value"].as_f64().unwrap();
    assert!((value / target - 1.0).abs() < 0.05, "value {value}");
    assert_eq!(v["estimator"], "CB");
    assert_eq!(v["variant"], "cb_default");
    assert_eq!(v["B"], 100000);
    assert_eq!(v["per_draw_summary"]["count"], 100000);
}

#[test]
fn missing_or_mismatched_design_exits_3() {
    let d = scratch("design");
    let y = write_vector(&d, 30);
    let o = bin().args(["estimate", "--predictor", "lasso:0.3", "--sigma2", "1", "--data"]).arg(&y).output().unwrap();
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("design"));

    let x = write_design(&d, 29, 5);
    let o = bin()
        .args(["estimate", "--predictor", "lasso:0.3", "--sigma2", "1", "--data"])
        .arg(&y)
        .arg("--design")
        .arg(&x)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(3));

    let x = write_design(&d, 30, 5);
    let v = json_of(
        &bin()
            .args(["estimate", "--predictor", "lasso:0.3", "--sigma2", "1", "--data"])
            .arg(&y)
            .arg("--design")
            .arg(&x)
            .output()
            .unwrap(),
    );
    assert!(v["value"].as_f64().unwrap().is_finite());
}

#[test]
fn parse_errors_exit_2() {
    let d = scratch("parse");
    let y = write_vector(&d, 10);
    let bad = d.join("bad.txt");
    fs::write(&bad, "1\n2\nthree\n").unwrap();
    let run = |args: &[&str], data: &Path| bin().args(args).arg("--data").arg(data).output().unwrap().status.code();
    assert_eq!(run(&["estimate", "--predictor", "identity", "--sigma2", "1"], &bad), Some(2));
    assert_eq!(run(&["estimate", "--predictor", "nonsense", "--sigma2", "1"], &y), Some(2));
    assert_eq!(run(&["estimate", "--predictor", "identity", "--sigma2", "1", "--variant", "nope"], &y), Some(2));
    assert_eq!(
        run(&["estimate", "--predictor", "identity", "--sigma2", "1", "--estimator", "cb", "--variant", "by_covariance"], &y),
        Some(2)
    );
    assert_eq!(run(&["estimate", "--predictor", "stepwise:2", "--sigma2", "1", "--estimator", "sure"], &y), Some(3));
    assert_eq!(run(&["estimate", "--predictor", "identity", "--sigma2", "-1"], &y), Some(2));
}

#[test]
fn exact_mean_variant_spreads_more() {
    let d = scratch("variants");
    let y = write_vector(&d, 50);
    let spread = |variant: &str| {
        let vals: Vec<f64> = (0..200)
            .map(|seed| {
                let o = bin()
                    .args(["estimate", "--predictor", "soft:1", "--sigma2", "1", "--alpha", "0.05", "--B", "10"])
                    .args(["--variant", variant, "--seed", &seed.to_string(), "--data"])
                    .arg(&y)
                    .output()
                    .unwrap();
                json_of(&o)["value"].as_f64().unwrap()
            })
            .collect();
        let m = vals.iter().sum::<f64>() / vals.len() as f64;
        (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (vals.len() - 1) as f64).sqrt()
    };
    let (default, exact) = (spread("cb_default"), spread("cb_exact_mean"));
    assert!(exact > 2.0 * default, "sd default {default}, exact mean {exact}");
}

#[test]
fn seed_flag_and_environment() {
    let d = scratch("seed");
    let y = write_vector(&d, 20);
    let base = ["estimate", "--predictor", "soft:0.5", "--sigma2", "1", "--B", "20"];
    let run = |extra: &[&str], env: Option<&str>| {
        let mut c = bin();
        c.args(base).args(extra).arg("--data").arg(&y);
        if let Some(s) = env {
            c.env("RISKEST_SEED", s);
        }
        json_of(&c.output().unwrap())["value"].as_f64().unwrap()
    };
    let flag = run(&["--seed", "5"], None);
    assert_eq!(flag, run(&[], Some("5")));
    assert_eq!(flag, run(&["--seed", "5"], Some("6")));
    assert_ne!(flag, run(&[], Some("6")));
}

#[test]
fn df_subcommand() {
    let d = scratch("df");
    let y = write_vector(&d, 40);
    let run = |method: &str| {
        json_of(
            &bin()
                .args(["df", "--predictor", "soft:1", "--sigma2", "1", "--alpha", "0.1", "--B", "200", "--method", method])
                .arg("--data")
                .arg(&y)
                .output()
                .unwrap(),
        )
    };
    let exact = run("sure");
    let count = fixture_values(40, 7).iter().filter(|v| v.abs() > 1.0).count() as f64;
    assert_eq!(exact["value"].as_f64().unwrap(), count);
    for m in ["cb", "ye", "ye-per-coordinate"] {
        let v = run(m);
        assert!(v["value"].as_f64().unwrap().is_finite(), "{m}");
        assert_eq!(v["alpha"], 0.1);
    }
}

const SMOKE: [&str; 6] =
    ["--set", "reps=3", "--set", "predictors=ridge:5,lasso:0.31,stepwise:2", "--set", "oracle_reps=200"];

#[test]
fn experiment_smoke_run() {
    let d = scratch("smoke");
    let start = Instant::now();
    let o = bin().args(["experiment", "--config", "figure1.desk"]).args(SMOKE).arg("--out").arg(&d).output().unwrap();
    let secs = start.elapsed().as_secs_f64();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(secs < 10.0, "smoke run took {secs:.1}s");
    let paths = stdout_lines(&o);
    assert_eq!(paths.len(), 2);
    assert!(paths.iter().all(|p| p.ends_with(".csv") && Path::new(p).is_file()));
    let rows = csv_rows(&paths[0]);
    assert_eq!(rows.len(), 3 * 3 * 6 * 2);
    assert!(rows.iter().all(|r| r["status"] == "ok"));
    let side: Value = serde_json::from_str(&fs::read_to_string(d.join("figure1_desk.json")).unwrap()).unwrap();
    assert_eq!(side["config"]["reps"], 3);
    assert_eq!(side["failed_rows"], 0);
}

#[test]
fn thread_count_does_not_change_output() {
    let run = |threads: &str| {
        let d = scratch(&format!("threads{threads}"));
        let o = bin()
            .args(["experiment", "--config", "figure1.desk", "--threads", threads])
            .args(SMOKE)
            .arg("--out")
            .arg(&d)
            .output()
            .unwrap();
        assert!(o.status.success());
        stdout_lines(&o).iter().map(|p| fs::read(p).unwrap()).collect::<Vec<_>>()
    };
    assert_eq!(run("1"), run("3"));
}

#[test]
fn failed_rows_exit_4() {
    let d = scratch("failed");
    let o = bin()
        .args(["experiment", "--config", "figure1.desk"])
        .args(["--set", "reps=2", "--set", "predictors=stepwise:60", "--set", "oracle_reps=10", "--set", "alphas=1"])
        .arg("--out")
        .arg(&d)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&stdout_lines(&o)[0]);
    assert!(rows.iter().all(|r| r["estimate"].is_empty() && r["status"] != "ok"));
}

#[test]
fn config_errors_exit_2() {
    let d = scratch("config");
    let cfg = d.join("nokind.toml");
    fs::write(&cfg, "n = 10\n").unwrap();
    let code = |args: &[&str]| bin().args(args).arg("--out").arg(&d).output().unwrap().status.code();
    assert_eq!(code(&["experiment", "--config", cfg.to_str().unwrap()]), Some(2));
    assert_eq!(code(&["experiment", "--config", "figure1.desk", "--set", "no_such_key=1"]), Some(2));
    assert_eq!(code(&["experiment", "--config", "figure1.desk", "--set", "reps"]), Some(2));
    assert_eq!(code(&["denoise", "--config", "df"]), Some(2));
    assert_eq!(code(&["experiment", "--config", "no/such/file.toml"]), Some(1));
}

#[test]
fn denoise_writes_selection_table() {
    let d = scratch("denoise");
    let o = bin()
        .args(["denoise", "--set", "reps=3", "--set", "B=5", "--set", "oracle_reps=50", "--set", "denoise.lambda_count=8"])
        .arg("--out")
        .arg(&d)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let paths = stdout_lines(&o);
    assert_eq!(paths.len(), 3);
    let sel = csv_rows(paths.iter().find(|p| p.ends_with("_selection.csv")).unwrap());
    assert_eq!(sel.iter().filter(|r| r["curve"] == "cb").count(), 4);
}

#[test]
fn analyze_tables() {
    let d = scratch("analyze");
    let o = bin()
        .args(["analyze", "--config", "analyze"])
        .args(["--set", "stein.reps=4000", "--set", "bias.reps=2000", "--set", "optimism.r_outer=400"])
        .args(["--set", "ht.draws=200000", "--set", "optimism.alphas=0.05"])
        .arg("--out")
        .arg(&d)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let paths = stdout_lines(&o);
    let table = |suffix: &str| csv_rows(paths.iter().find(|p| p.ends_with(suffix)).unwrap());
    let num = |r: &std::collections::HashMap<String, String>, k: &str| r[k].parse::<f64>().unwrap();

    let stein = table("_stein.csv");
    let smoother = stein.iter().find(|r| r["predictor"] == "moving_average:2").unwrap();
    assert!(num(smoother, "z").abs() < 4.0);

    for r in table("_ht.csv") {
        assert!(num(&r, "z").abs() < 4.0, "{r:?}");
    }

    let opt = table("_optimism.csv");
    let soft = opt.iter().find(|r| r["predictor"] == "soft:1").unwrap();
    assert!(num(soft, "b_alpha") > 5.0 * num(soft, "a_alpha"), "{soft:?}");

    assert!(!table("_bias.csv").is_empty());
}
