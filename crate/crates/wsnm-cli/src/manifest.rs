//! Run manifests and timing reports.
//!
//! `manifest.json` is the reproducibility record: the resolved config echo,
//! the library version, the list of output files with their byte sizes, and
//! the key metrics. Everything in it is a pure function of the config, so
//! re-running the same config produces the identical file. Wall-clock stage
//! timings are inherently volatile and therefore live in a sibling
//! `timings.json` instead of the manifest.

use anyhow::{Context, Result};
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Debug, Serialize)]
pub struct OutputEntry {
    /// Path relative to the output directory.
    pub path: String,
    pub bytes: u64,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config: serde_json::Value,
    pub outputs: Vec<OutputEntry>,
    pub metrics: BTreeMap<String, serde_json::Value>,
}

impl RunManifest {
    pub fn new(command: &str, config: impl Serialize) -> Result<Self> {
        Ok(RunManifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: serde_json::to_value(config).context("config echo serialization")?,
            outputs: Vec::new(),
            metrics: BTreeMap::new(),
        })
    }

    /// Records an output file that already exists on disk.
    pub fn add_output(&mut self, out_dir: &Path, relative: &str) -> Result<()> {
        let full = out_dir.join(relative);
        let meta = std::fs::metadata(&full)
            .with_context(|| format!("output file {} missing", full.display()))?;
        self.outputs.push(OutputEntry {
            path: relative.to_string(),
            bytes: meta.len(),
        });
        Ok(())
    }

    pub fn add_metric(&mut self, key: &str, value: f64) {
        self.metrics.insert(key.to_string(), json_number(value));
    }

    pub fn add_metric_int(&mut self, key: &str, value: u64) {
        self.metrics
            .insert(key.to_string(), serde_json::Value::from(value));
    }

    pub fn add_metric_bool(&mut self, key: &str, value: bool) {
        self.metrics
            .insert(key.to_string(), serde_json::Value::from(value));
    }

    /// Writes `manifest.json` into the output directory (atomically).
    pub fn write(&self, out_dir: &Path) -> Result<PathBuf> {
        let path = out_dir.join("manifest.json");
        let mut text = serde_json::to_string_pretty(self).context("manifest serialization")?;
        text.push('\n');
        write_atomic(&path, text.as_bytes())?;
        Ok(path)
    }
}

/// JSON has no NaN/inf literals; fall back to their string forms so the
/// manifest stays valid (and still deterministic) for degenerate metrics.
fn json_number(value: f64) -> serde_json::Value {
    match serde_json::Number::from_f64(value) {
        Some(n) => serde_json::Value::Number(n),
        None => serde_json::Value::String(format!("{value}")),
    }
}

/// Wall-clock stage timings, written to `timings.json`. Volatile by nature:
/// excluded from the manifest so reproducibility checks can compare whole
/// files.
#[derive(Debug, Default, Serialize)]
pub struct Timings {
    pub stages: Vec<Stage>,
}

#[derive(Debug, Serialize)]
pub struct Stage {
    pub name: String,
    pub seconds: f64,
}

impl Timings {
    pub fn time<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let t0 = Instant::now();
        let out = f();
        self.stages.push(Stage {
            name: name.to_string(),
            seconds: t0.elapsed().as_secs_f64(),
        });
        out
    }

    pub fn write(&self, out_dir: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).context("timings serialization")?;
        text.push('\n');
        write_atomic(&out_dir.join("timings.json"), text.as_bytes())
    }
}

/// Write-to-temp-then-rename so readers never observe a half-written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).with_context(|| format!("cannot write {}", tmp.display()))?;
    std::fs::rename(&tmp, path)
        .with_context(|| format!("cannot move {} into place", path.display()))?;
    Ok(())
}
