//! Schema validation for distribution and flow files.

use crate::error::CliResult;
use crate::io::read_text;
use flowcap::densities::spec::{self, DIST_SCHEMA};
use flowcap::flows::{FlowStack, FLOW_SCHEMA};
use serde::Serialize;
use serde_json::Value;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileReport {
    pub path: String,
    /// "flow", "dist" or "unknown".
    pub kind: String,
    pub ok: bool,
    pub error: Option<String>,
}

fn classify(v: &Value) -> &'static str {
    let schema = v.get("schema").and_then(Value::as_str);
    if schema == Some(FLOW_SCHEMA) || v.get("layers").is_some() {
        "flow"
    } else if schema == Some(DIST_SCHEMA) || v.get("kind").is_some() {
        "dist"
    } else {
        "unknown"
    }
}

pub fn validate_value(v: &Value) -> (String, Option<String>) {
    let kind = classify(v);
    let err = match kind {
        "flow" => FlowStack::from_json(v).err().map(|e| e.to_string()),
        "dist" => spec::from_json(v).err().map(|e| e.to_string()),
        _ => Some(format!(
            "schema error at $.schema: unrecognized document (expected \"{FLOW_SCHEMA}\" or \"{DIST_SCHEMA}\")"
        )),
    };
    (kind.to_string(), err)
}

/// Unreadable files are an I/O error; invalid content is reported per file.
pub fn validate_files(paths: &[impl AsRef<Path>]) -> CliResult<Vec<FileReport>> {
    let mut out = Vec::with_capacity(paths.len());
    for p in paths {
        let p = p.as_ref();
        let text = read_text(p)?;
        let (kind, error) = match serde_json::from_str::<Value>(&text) {
            Ok(v) => validate_value(&v),
            Err(e) => ("unknown".to_string(), Some(format!("schema error at $: {e}"))),
        };
        out.push(FileReport { path: p.display().to_string(), kind, ok: error.is_none(), error });
    }
    Ok(out)
}
