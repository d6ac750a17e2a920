use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::CliError;

fn numeric_rows(path: &Path) -> Result<Vec<Vec<f64>>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Result<Vec<f64>, _> = line.split(',').map(|f| f.trim().parse::<f64>()).collect();
        match fields {
            Ok(v) => rows.push(v),
            // a non-numeric first row is a header
            Err(_) if rows.is_empty() && i == first_content_line(&text) => continue,
            Err(_) => return Err(CliError::Parse(format!("{}:{}: cannot parse `{line}`", path.display(), i + 1))),
        }
    }
    if rows.is_empty() {
        return Err(CliError::Parse(format!("{}: no data rows", path.display())));
    }
    if let Some(bad) = rows.iter().flatten().find(|v| !v.is_finite()) {
        return Err(CliError::Parse(format!("{}: non-finite entry {bad}", path.display())));
    }
    Ok(rows)
}

fn first_content_line(text: &str) -> usize {
    text.lines().position(|l| !l.trim().is_empty() && !l.trim().starts_with('#')).unwrap_or(0)
}

/// Reads a data vector: one number per line, optionally under a header.
pub fn read_vector(path: &Path) -> Result<Vec<f64>, CliError> {
    let rows = numeric_rows(path)?;
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != 1) {
        return Err(CliError::Parse(format!(
            "{}: data row {} has {} columns, expected 1",
            path.display(),
            i + 1,
            r.len()
        )));
    }
    Ok(rows.into_iter().map(|r| r[0]).collect())
}

/// Reads a comma separated design matrix, optionally under a header.
pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>, CliError> {
    let rows = numeric_rows(path)?;
    let p = rows[0].len();
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != p) {
        return Err(CliError::Dimension(format!(
            "{}: row {} has {} columns, expected {p}",
            path.display(),
            i + 1,
            r.len()
        )));
    }
    Ok(DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]))
}
