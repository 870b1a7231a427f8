//! Small file helpers shared by the subcommands.

use std::fs::File;
use std::io::{BufReader, Write};
use std::path::Path;

use crate::CliError;

pub fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Data(format!("cannot open {}: {e}", path.display())))
}

pub fn create(path: &Path) -> Result<File, CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| CliError::Data(format!("cannot create {}: {e}", parent.display())))?;
        }
    }
    File::create(path)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", path.display())))
}

pub fn write_string(path: &Path, content: &str) -> Result<(), CliError> {
    let mut f = create(path)?;
    f.write_all(content.as_bytes())
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

pub fn read_to_string(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))
}

/// Parses a numeric vector file: one value per line, or comma-separated
/// values on any line. Blank lines and `#` comments are ignored.
pub fn read_vector(path: &Path) -> Result<Vec<f64>, CliError> {
    let text = read_to_string(path)?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        for field in line.split(',').map(str::trim).filter(|f| !f.is_empty()) {
            let v: f64 = field.parse().map_err(|e| {
                CliError::Data(format!(
                    "{}:{}: bad number {field:?}: {e}",
                    path.display(),
                    lineno + 1
                ))
            })?;
            if !v.is_finite() {
                return Err(CliError::Data(format!(
                    "{}:{}: non-finite value {field:?}",
                    path.display(),
                    lineno + 1
                )));
            }
            out.push(v);
        }
    }
    if out.is_empty() {
        return Err(CliError::Data(format!(
            "{}: no numeric values found",
            path.display()
        )));
    }
    Ok(out)
}

/// Reads a correctness vector of 0/1 values.
pub fn read_bool_vector(path: &Path) -> Result<Vec<bool>, CliError> {
    read_vector(path)?
        .into_iter()
        .map(|v| {
            if v == 0.0 {
                Ok(false)
            } else if v == 1.0 {
                Ok(true)
            } else {
                Err(CliError::Data(format!(
                    "{}: correctness vectors must contain only 0 and 1, found {v}",
                    path.display()
                )))
            }
        })
        .collect()
}
