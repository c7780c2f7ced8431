//! File helpers shared by the subcommands.

use crate::error::{CliError, CliResult};
use flowcap::densities::{spec, DynDensity};
use flowcap::flows::FlowStack;
use flowcap::linalg::from_rows;
use nalgebra::DMatrix;
use serde_json::Value;
use std::fs;
use std::path::{Path, PathBuf};

pub fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn read_json(path: &Path) -> CliResult<Value> {
    let s = read_text(path)?;
    serde_json::from_str(&s).map_err(|e| {
        flowcap::Error::Schema { path: format!("{}:$", path.display()), msg: e.to_string() }.into()
    })
}

pub fn read_dist(path: &Path) -> CliResult<DynDensity> {
    Ok(spec::from_json(&read_json(path)?)?)
}

pub fn read_flow(path: &Path) -> CliResult<FlowStack> {
    Ok(FlowStack::from_json(&read_json(path)?)?)
}

fn rows_of(v: &Value, what: &str) -> CliResult<Vec<Vec<f64>>> {
    serde_json::from_value(v.clone()).map_err(|e| {
        flowcap::Error::Schema { path: format!("$ ({what})"), msg: e.to_string() }.into()
    })
}

/// A JSON array of rows, or an object with a "matrix" field.
pub fn read_matrix(path: &Path) -> CliResult<DMatrix<f64>> {
    let v = read_json(path)?;
    let v = v.get("matrix").cloned().unwrap_or(v);
    Ok(from_rows(&rows_of(&v, "matrix")?)?)
}

/// A JSON array of points.
pub fn read_points(path: &Path) -> CliResult<Vec<Vec<f64>>> {
    rows_of(&read_json(path)?, "points")
}

/// "1,2;3,4" → [[1,2],[3,4]]
pub fn parse_points(s: &str) -> CliResult<Vec<Vec<f64>>> {
    s.split(';')
        .filter(|p| !p.trim().is_empty())
        .map(|p| parse_list(p))
        .collect()
}

pub fn parse_list(s: &str) -> CliResult<Vec<f64>> {
    s.split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|_| CliError::usage(format!("not a number: '{x}'"))))
        .collect()
}

pub fn parse_dims(s: &str) -> CliResult<Vec<usize>> {
    s.split(',')
        .map(|x| x.trim().parse::<usize>().map_err(|_| CliError::usage(format!("not a dimension: '{x}'"))))
        .collect()
}

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn write_text(path: &Path, s: &str) -> CliResult<PathBuf> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    fs::write(path, s).map_err(|e| CliError::io(path, e))?;
    Ok(path.to_path_buf())
}

pub fn write_json(path: &Path, v: &impl serde::Serialize) -> CliResult<PathBuf> {
    let s = serde_json::to_string_pretty(v).expect("serializable value");
    write_text(path, &(s + "\n"))
}

/// Rows are written with Rust's shortest round-trip float formatting, so
/// identical inputs give byte-identical files.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> CliResult<PathBuf> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r.iter().map(|x| x.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Validation(e.to_string()))?;
    write_text(path, &String::from_utf8(bytes).expect("csv is utf-8"))
}
