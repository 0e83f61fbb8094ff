//! Report files: JSON documents, CSV tables and run manifests.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::CliError;

pub const MANIFEST_VERSION: u32 = 1;

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Config(format!("cannot create {}: {e}", dir.display())))
}

pub fn write_json<S: Serialize + ?Sized>(path: &Path, value: &S) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(sitadda::Error::from)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::Core(e.into()))
}

pub fn write_csv<S: Serialize>(path: &Path, rows: &[S]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    for row in rows {
        w.serialize(row).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    }
    w.flush().map_err(|e| CliError::Core(e.into()))
}

/// Record of one CLI invocation.
#[derive(Debug, Serialize)]
pub struct Manifest<C: Serialize> {
    pub manifest_version: u32,
    pub tool_version: &'static str,
    pub command: &'static str,
    pub seed: u64,
    pub status: &'static str,
    pub config: C,
    pub outputs: Vec<PathBuf>,
    #[serde(skip_serializing_if = "serde_json::Value::is_null")]
    pub details: serde_json::Value,
}

impl<C: Serialize> Manifest<C> {
    pub fn new(command: &'static str, seed: u64, config: C) -> Self {
        Manifest {
            manifest_version: MANIFEST_VERSION,
            tool_version: env!("CARGO_PKG_VERSION"),
            command,
            seed,
            status: "ok",
            config,
            outputs: Vec::new(),
            details: serde_json::Value::Null,
        }
    }

    pub fn write(&self, out: &Path) -> Result<(), CliError> {
        write_json(&out.join("manifest.json"), self)
    }
}
