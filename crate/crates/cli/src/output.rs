//! Report emission: stdout in the chosen format, and with `--out` the full
//! JSON report, a CSV summary, a witness file and run metadata.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use clap::ValueEnum;
use serde_json::{json, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

/// Everything a subcommand hands back.
pub struct Outcome {
    pub report: Value,
    /// One CSV row, in column order.
    pub summary: Vec<(&'static str, String)>,
    /// Written next to the report when a violation is found and `--out` is set.
    pub witness: Option<Value>,
    pub violated: bool,
}

impl Outcome {
    pub fn holds(report: Value, summary: Vec<(&'static str, String)>) -> Self {
        Self { report, summary, witness: None, violated: false }
    }
}

pub fn json_text(v: &Value) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

pub fn csv_text(summary: &[(&'static str, String)]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(summary.iter().map(|(h, _)| *h))?;
    w.write_record(summary.iter().map(|(_, v)| v.as_str()))?;
    Ok(String::from_utf8(w.into_inner()?)?)
}

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "report".into());
    out.with_file_name(format!("{stem}{suffix}"))
}

fn meta_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|s| s.to_os_string()).unwrap_or_else(|| "report".into());
    name.push(".meta.json");
    out.with_file_name(name)
}

pub fn emit(outcome: &Outcome, format: Format, out: Option<&Path>, threads: usize) -> Result<()> {
    let json = json_text(&outcome.report)?;
    let csv = csv_text(&outcome.summary)?;
    match format {
        Format::Json => print!("{json}"),
        Format::Csv => print!("{csv}"),
    }
    let Some(out) = out else { return Ok(()) };
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(out, &json).with_context(|| format!("writing {}", out.display()))?;
    fs::write(sibling(out, ".csv"), &csv)?;
    if let (true, Some(w)) = (outcome.violated, &outcome.witness) {
        fs::write(sibling(out, ".witness.json"), json_text(w)?)?;
    }
    let created = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let meta = json!({
        "created_unix": created,
        "version": env!("CARGO_PKG_VERSION"),
        "threads": threads,
        "args": std::env::args().collect::<Vec<_>>(),
    });
    fs::write(meta_path(out), json_text(&meta)?)?;
    Ok(())
}
