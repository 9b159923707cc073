use std::fs::File;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use chrono::{SecondsFormat, Utc};
use serde::Serialize;
use shopseg::txmodel::sha256_hex;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Serialize)]
pub struct InputFingerprint {
    pub path: PathBuf,
    pub sha256: String,
}

/// Record of one command invocation, written next to its outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub inputs: Vec<InputFingerprint>,
    pub seed: Option<u64>,
    pub tool_version: String,
    pub started_at: String,
    pub finished_at: Option<String>,
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

pub fn fingerprint_file(path: &Path) -> Result<InputFingerprint> {
    let mut reader = BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?);
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    Ok(InputFingerprint {
        path: path.to_path_buf(),
        sha256: sha256_hex(&bytes),
    })
}

impl RunManifest {
    pub fn start(command: &str, config: serde_json::Value, seed: Option<u64>) -> Self {
        Self {
            command: command.to_string(),
            config,
            inputs: Vec::new(),
            seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            started_at: now(),
            finished_at: None,
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(fingerprint_file(path)?);
        Ok(())
    }

    pub fn finish(mut self, out_dir: &Path) -> Result<()> {
        self.finished_at = Some(now());
        std::fs::create_dir_all(out_dir)?;
        let text = serde_json::to_string_pretty(&self)? + "\n";
        std::fs::write(out_dir.join(MANIFEST_FILE), text)
            .with_context(|| format!("writing manifest in {}", out_dir.display()))?;
        Ok(())
    }
}
