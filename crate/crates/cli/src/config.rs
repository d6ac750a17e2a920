use std::fs;
use std::path::Path;

use cbrisk::harness::config::set_dotted;
use cbrisk::harness::ExperimentSpec;
use serde_json::Value;

use crate::error::CliError;

/// Configurations shipped with the binary, addressable by name.
pub const BUNDLED: &[(&str, &str)] = &[
    ("figure1.desk", include_str!("../configs/figure1.desk.toml")),
    ("figure2.desk", include_str!("../configs/figure2.desk.toml")),
    ("df", include_str!("../configs/df.toml")),
    ("denoise", include_str!("../configs/denoise.toml")),
    ("appendixF", include_str!("../configs/appendixF.toml")),
    ("analyze", include_str!("../configs/analyze.toml")),
];

fn bundled(name: &str) -> Option<&'static str> {
    let name = name.strip_suffix(".toml").unwrap_or(name);
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}

/// Reads a TOML document from a file, or from the bundled set when no file of
/// that name exists.
pub fn load_document(source: &str) -> Result<Value, CliError> {
    let text = if Path::new(source).is_file() {
        fs::read_to_string(source).map_err(|e| CliError::Io(format!("{source}: {e}")))?
    } else if let Some(text) = bundled(source) {
        text.to_string()
    } else {
        let names: Vec<&str> = BUNDLED.iter().map(|(n, _)| *n).collect();
        return Err(CliError::Io(format!("{source}: no such file or bundled config ({})", names.join(", "))));
    };
    let doc: toml::Table = toml::from_str(&text).map_err(|e| CliError::Parse(format!("{source}: {e}")))?;
    serde_json::to_value(doc).map_err(|e| CliError::Parse(e.to_string()))
}

/// Builds an experiment from a config, filling in `kind` when the document
/// does not name one, then applies overrides and the seed.
pub fn load_spec(
    source: &str,
    kind: Option<&str>,
    overrides: &[String],
    seed: Option<u64>,
) -> Result<ExperimentSpec, CliError> {
    let mut doc = load_document(source)?;
    let obj = doc.as_object_mut().ok_or_else(|| CliError::Parse("config must be a table".into()))?;
    match (obj.get("experiment").and_then(Value::as_str), kind) {
        (None, Some(k)) => {
            obj.insert("experiment".into(), Value::String(k.into()));
        }
        (None, None) => return Err(CliError::Parse(format!("{source}: missing `experiment` key"))),
        (Some(found), Some(k)) if found != k => {
            return Err(CliError::Parse(format!("{source}: expected a `{k}` config, found `{found}`")));
        }
        _ => {}
    }
    let mut spec = ExperimentSpec::from_json(doc)?;
    spec.apply_overrides(overrides)?;
    if let Some(s) = seed {
        spec.apply_overrides(&[format!("seed={s}")])?;
    }
    spec.validate()?;
    Ok(spec)
}

/// Applies `key=value` overrides to a raw document.
pub fn override_document(doc: &mut Value, overrides: &[String]) -> Result<(), CliError> {
    for kv in overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Parse(format!("override `{kv}` is not of the form key=value")))?;
        set_dotted(doc, k.trim(), v)?;
    }
    Ok(())
}
