//! Artifact writers. CSV artifacts start with a `# runspec: {...}` comment
//! followed by a header row and 17-significant-digit floats (lossless f64
//! round-trips); JSON artifacts embed the run record under a `runspec` key.

use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::json;

use crate::config::{CliResult, RunSpec};

/// 17 significant digits, enough to reconstruct the exact f64.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn csv_document(runspec: &RunSpec, header: &[&str], rows: &[Vec<String>]) -> String {
    let spec = serde_json::to_string(runspec).expect("run record serializes");
    let mut doc = String::with_capacity(64 * (rows.len() + 2));
    doc.push_str("# runspec: ");
    doc.push_str(&spec);
    doc.push('\n');
    doc.push_str(&header.join(","));
    doc.push('\n');
    for row in rows {
        doc.push_str(&row.join(","));
        doc.push('\n');
    }
    doc
}

pub fn json_document<T: Serialize>(runspec: &RunSpec, key: &str, payload: &T) -> String {
    let doc = json!({ "runspec": runspec, key: payload });
    let mut text = serde_json::to_string_pretty(&doc).expect("artifact serializes");
    text.push('\n');
    text
}

/// Writes to `out` (creating parent directories) or prints to stdout.
pub fn emit(out: Option<&Path>, content: &str) -> CliResult<()> {
    match out {
        Some(path) => {
            if let Some(dir) = path.parent() {
                if !dir.as_os_str().is_empty() {
                    fs::create_dir_all(dir)?;
                }
            }
            fs::write(path, content)?;
            Ok(())
        }
        None => {
            print!("{content}");
            Ok(())
        }
    }
}
