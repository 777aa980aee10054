//! Structured report files and the aligned text tables printed to stdout.
//!
//! Reports are a versioned line format: `key=value` metadata, one
//! tab-separated `row` line per scheme with full-precision numbers
//! (shortest round-trip form), optional `snr` lines, and a closing `end`.
//! Nothing time- or host-dependent is ever written, so identical runs
//! produce byte-identical files.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{CliError, Result};
use crate::metrics::FidelityReport;

pub const REPORT_HEADER: &str = "sqdit-report/1";

/// Writes via a sibling temp file and renames into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(CliError::io(parent.display().to_string()))?;
        }
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(CliError::io(tmp.display().to_string()))?;
    std::fs::rename(&tmp, path).map_err(CliError::io(path.display().to_string()))?;
    Ok(())
}

/// Builder for the structured report body.
pub struct ReportFile {
    body: String,
}

impl ReportFile {
    pub fn new(kind: &str) -> Self {
        let mut body = String::new();
        let _ = writeln!(body, "{REPORT_HEADER}");
        let _ = writeln!(body, "kind={kind}");
        Self { body }
    }

    pub fn meta(&mut self, key: &str, value: impl std::fmt::Display) -> &mut Self {
        let _ = writeln!(self.body, "{key}={value}");
        self
    }

    /// One tab-separated record line with the given tag.
    pub fn record(&mut self, tag: &str, fields: &[String]) -> &mut Self {
        let _ = writeln!(self.body, "{tag}\t{}", fields.join("\t"));
        self
    }

    /// Standard metric rows plus their SNR grids.
    pub fn fidelity(&mut self, report: &FidelityReport) -> &mut Self {
        self.record(
            "columns",
            &["scheme", "w_bits", "a_bits", "mse", "cosine", "psnr_db"].map(String::from),
        );
        for row in &report.rows {
            self.record(
                "row",
                &[
                    row.scheme.clone(),
                    row.w_bits.to_string(),
                    row.a_bits.to_string(),
                    format!("{:?}", row.mse),
                    format!("{:?}", row.cosine),
                    format!("{:?}", row.psnr_db),
                ],
            );
        }
        for row in &report.rows {
            for cell in &row.snr {
                self.record(
                    "snr",
                    &[
                        row.scheme.clone(),
                        cell.layer.clone(),
                        cell.step.to_string(),
                        format!("{:?}", cell.snr_db),
                    ],
                );
            }
        }
        self
    }

    pub fn finish(mut self) -> String {
        self.body.push_str("end\n");
        self.body
    }
}

/// Aligned human-readable table for stdout.
pub fn render_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (i, cell) in row.iter().enumerate() {
            widths[i] = widths[i].max(cell.len());
        }
    }
    let mut out = String::new();
    let line = |cells: Vec<String>, widths: &[usize]| {
        let mut s = String::new();
        for (i, cell) in cells.iter().enumerate() {
            if i > 0 {
                s.push_str("  ");
            }
            let _ = write!(s, "{cell:<width$}", width = widths[i]);
        }
        s.trim_end().to_string()
    };
    out.push_str(&line(
        header.iter().map(|s| s.to_string()).collect(),
        &widths,
    ));
    out.push('\n');
    let total: usize = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
    out.push_str(&"-".repeat(total));
    out.push('\n');
    for row in rows {
        out.push_str(&line(row.clone(), &widths));
        out.push('\n');
    }
    out
}

/// Fixed-width display rounding for the human table; the structured rows
/// keep full precision.
pub fn disp(v: f64) -> String {
    if v.abs() >= 1e6 || (v != 0.0 && v.abs() < 1e-4) {
        format!("{v:.4e}")
    } else {
        format!("{v:.6}")
    }
}
