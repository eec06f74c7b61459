//! Deterministic output writing: CSV with `.` decimals and shortest
//! round-trip float formatting, JSON with sorted keys. Byte-identical for
//! identical `(config, seed)` regardless of thread count.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;

use crate::config::RawConfig;

/// Where a command run put its artifacts.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub command: &'static str,
    pub out_dir: PathBuf,
    pub files: Vec<PathBuf>,
}

impl RunReport {
    pub fn announce(&self) {
        for file in &self.files {
            println!("wrote {}", file.display());
        }
    }
}

pub fn ensure_out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

/// Serializes to pretty JSON with a trailing newline. Map keys are sorted
/// (`BTreeMap` everywhere), so the bytes are stable.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).context("serializing report")?;
    text.push('\n');
    write_text(path, &text)
}

/// The config echo embedded in every summary: raw key-value entries exactly
/// as parsed, so the summary alone reproduces the run.
pub fn config_echo(raw: &RawConfig) -> Value {
    serde_json::to_value(raw.entries()).expect("string map serializes")
}
