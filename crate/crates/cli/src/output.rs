//! Deterministic writers for CSV and JSON outputs.
//!
//! Floats are rendered in the shortest round-trip form, so identical
//! computations produce byte-identical files. Optional cells render empty;
//! pole-flagged cells render the literal `pole`.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::Serialize;

pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// `pole` marker for flagged sweep cells.
pub fn fmt_or_pole(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_else(|| "pole".to_string())
}

/// Writes CSV with an exact header and pre-rendered rows.
pub fn write_csv(path: &Path, header: &str, rows: &[Vec<String>]) -> io::Result<()> {
    let mut out = String::with_capacity(rows.len() * 32);
    out.push_str(header);
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out)
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)
}

/// Coordinate-format dump of a matrix.
pub fn write_coord_file(path: &Path, m: &nalgebra::DMatrix<f64>) -> io::Result<()> {
    let mut buf = Vec::new();
    coarsespace::coord::write_coord(&mut buf, m)?;
    let mut f = fs::File::create(path)?;
    f.write_all(&buf)
}

/// Compact parameter rendering for file names: 0.5 -> "0.5", 10.0 -> "10".
pub fn fmt_param(v: f64) -> String {
    if v == v.trunc() {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}
