//! Report files: a JSON summary per run and fixed-column CSV data files.
//! Every file embeds the effective configuration and the artifact version;
//! numbers are printed with 17 significant digits so reruns with the same
//! seed are byte-identical.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use crate::error::Result;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// 17 significant digits, scientific.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes `summary.json` with the subcommand, version, configuration, and
/// result payload.
pub fn write_summary(
    out_dir: &Path,
    subcommand: &str,
    config: &BTreeMap<String, String>,
    results: Value,
) -> Result<PathBuf> {
    std::fs::create_dir_all(out_dir)?;
    let path = out_dir.join("summary.json");
    let doc = json!({
        "subcommand": subcommand,
        "version": VERSION,
        "config": config,
        "results": results,
    });
    let mut file = std::fs::File::create(&path)?;
    serde_json::to_writer_pretty(&mut file, &doc).map_err(|e| crate::error::Error::Io(e.into()))?;
    file.write_all(b"\n")?;
    Ok(path)
}

/// Writes a CSV file with the configuration as leading comment lines and
/// fixed columns.
pub fn write_csv(
    out_dir: &Path,
    name: &str,
    config: &BTreeMap<String, String>,
    columns: &[&str],
    rows: &[Vec<String>],
) -> Result<PathBuf> {
    std::fs::create_dir_all(out_dir)?;
    let path = out_dir.join(name);
    let mut buf = String::new();
    buf.push_str(&format!("# version = {VERSION}\n"));
    for (k, v) in config {
        buf.push_str(&format!("# {k} = {v}\n"));
    }
    buf.push_str(&columns.join(","));
    buf.push('\n');
    for row in rows {
        debug_assert_eq!(row.len(), columns.len());
        buf.push_str(&row.join(","));
        buf.push('\n');
    }
    std::fs::write(&path, buf)?;
    Ok(path)
}
