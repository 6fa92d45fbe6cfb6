use std::collections::BTreeMap;
use std::path::Path;

use chrono::{SecondsFormat, Utc};
use serde::Serialize;

pub const FILE_NAME: &str = "manifest.json";

/// Provenance of one output directory.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    /// SHA-256 of the effective subcommand arguments and seed.
    pub config_digest: String,
    pub input_digests: BTreeMap<String, String>,
    pub output_digests: BTreeMap<String, String>,
    pub seed: u64,
    pub tool_version: String,
    pub timestamp: String,
    pub details: serde_json::Value,
}

impl Manifest {
    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        let mut text = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        text.push('\n');
        std::fs::write(dir.join(FILE_NAME), text)
    }
}

pub fn timestamp() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Secs, true)
}
