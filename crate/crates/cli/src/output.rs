//! Deterministic result serialization. Every run produces a single
//! `summary.json` plus kind-specific CSV traces; every emitted file carries
//! the config hash and the seed, and none carries a timestamp, so a rerun
//! of the same config is byte-identical.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::errors::{runtime, CliError};

/// Version stamp of the JSON summary layout.
pub const SCHEMA_VERSION: u32 = 1;

/// Hex SHA-256 of a byte string; the config identity used in every output.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Full-precision decimal rendering of one value: 17 significant digits
/// round-trip every finite double.
pub fn cell(x: f64) -> String {
    format!("{x:.16e}")
}

/// Axis scaling hint recorded per CSV for the emitted plot script.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotScale {
    Linear,
    LogLog,
}

struct CsvMeta {
    name: String,
    scale: PlotScale,
}

/// Collects a run's output files under one directory.
pub struct OutputWriter {
    dir: PathBuf,
    kind: String,
    config_hash: String,
    seed: u64,
    plot: bool,
    csvs: Vec<CsvMeta>,
}

impl OutputWriter {
    pub fn new(
        dir: &Path,
        kind: &str,
        config_hash: String,
        seed: u64,
        plot: bool,
    ) -> Result<Self, CliError> {
        fs::create_dir_all(dir)
            .map_err(|e| runtime(format!("cannot create {}: {e}", dir.display())))?;
        Ok(OutputWriter {
            dir: dir.to_path_buf(),
            kind: kind.to_string(),
            config_hash,
            seed,
            plot,
            csvs: Vec::new(),
        })
    }

    fn stamp(&self) -> String {
        format!("# config_hash = {}\n# seed = {}\n", self.config_hash, self.seed)
    }

    fn write_file(&self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, contents)
            .map_err(|e| runtime(format!("cannot write {}: {e}", path.display())))
    }

    /// Writes one CSV trace: hash/seed stamp, header row, pre-formatted
    /// data rows. Numeric cells should come from [`cell`].
    pub fn write_csv(
        &mut self,
        name: &str,
        header: &[&str],
        rows: &[Vec<String>],
        scale: PlotScale,
    ) -> Result<(), CliError> {
        let mut out = self.stamp();
        out.push_str(&header.join(","));
        out.push('\n');
        for row in rows {
            debug_assert_eq!(row.len(), header.len());
            out.push_str(&row.join(","));
            out.push('\n');
        }
        self.write_file(name, &out)?;
        self.csvs.push(CsvMeta {
            name: name.to_string(),
            scale,
        });
        Ok(())
    }

    /// Writes `summary.json`: a fixed envelope around the echoed inputs
    /// and the run's results. Map keys serialize in sorted order, so the
    /// byte layout is a pure function of the content.
    pub fn write_summary(
        &self,
        inputs: serde_json::Value,
        results: serde_json::Value,
    ) -> Result<(), CliError> {
        let doc = serde_json::json!({
            "schema_version": SCHEMA_VERSION,
            "kind": self.kind,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "inputs": inputs,
            "results": results,
        });
        let text = serde_json::to_string_pretty(&doc)
            .map_err(|e| runtime(format!("summary serialization failed: {e}")))?;
        self.write_file("summary.json", &format!("{text}\n"))
    }

    /// Emits the plot script when requested; call after all CSVs are
    /// written. The script reads the CSVs by name from its own directory
    /// and renders one PNG per trace.
    pub fn finish(&self) -> Result<(), CliError> {
        if !self.plot || self.csvs.is_empty() {
            return Ok(());
        }
        let mut files = String::new();
        for meta in &self.csvs {
            let loglog = if meta.scale == PlotScale::LogLog {
                "True"
            } else {
                "False"
            };
            files.push_str(&format!("    (\"{}\", {}),\n", meta.name, loglog));
        }
        let script = format!(
            r##"#!/usr/bin/env python3
{stamp}"""Renders every CSV trace of this run as a PNG (one per file)."""
import csv
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

HERE = os.path.dirname(os.path.abspath(__file__))
FILES = [
{files}]


def load(path):
    with open(path) as f:
        rows = list(csv.reader(ln for ln in f if not ln.startswith("#")))
    header, data = rows[0], rows[1:]
    cols = []
    for j, name in enumerate(header):
        try:
            cols.append((name, [float(r[j]) for r in data]))
        except ValueError:
            continue
    return cols


for name, loglog in FILES:
    cols = load(os.path.join(HERE, name))
    if len(cols) < 2:
        continue
    x_name, xs = cols[0]
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    for y_name, ys in cols[1:]:
        if loglog:
            ax.loglog(xs, ys, label=y_name)
        else:
            ax.plot(xs, ys, label=y_name)
    ax.set_xlabel(x_name)
    ax.legend()
    ax.set_title(name)
    fig.tight_layout()
    fig.savefig(os.path.join(HERE, name.replace(".csv", ".png")), dpi=150)
    plt.close(fig)
"##,
            stamp = self.stamp(),
            files = files,
        );
        self.write_file("plot.py", &script)
    }
}
