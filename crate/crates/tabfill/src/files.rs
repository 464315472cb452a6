//! JSON artifact files: checkpoints, oracle specs, training configs,
//! evaluation reports, and the per-run manifest.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use tabfill_core::checkpoint::{Checkpoint, CHECKPOINT_FORMAT_VERSION};
use tabfill_core::oracle::OracleSpec;
use tabfill_core::train::TrainConfig;

pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    let text = serde_json::to_string(ck)?;
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading checkpoint {}", path.display()))?;
    let ck: Checkpoint = serde_json::from_str(&text)
        .with_context(|| format!("parsing checkpoint {}", path.display()))?;
    if ck.format_version != CHECKPOINT_FORMAT_VERSION {
        bail!(
            "checkpoint {} has format version {}, this build reads {}",
            path.display(),
            ck.format_version,
            CHECKPOINT_FORMAT_VERSION
        );
    }
    Ok(ck)
}

pub fn load_oracle_spec(path: &Path) -> Result<OracleSpec> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading oracle spec {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| anyhow!("{}: {e}", path.display()))
}

pub fn save_oracle_spec(path: &Path, spec: &OracleSpec) -> Result<()> {
    let text = serde_json::to_string_pretty(spec)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

pub fn load_train_config(path: &Path) -> Result<TrainConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading training config {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| anyhow!("{}: {e}", path.display()))
}

pub fn save_json_pretty<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

/// SHA-256 of a serialized value, for manifests.
pub fn config_hash<T: Serialize>(value: &T) -> Result<String> {
    let bytes = serde_json::to_vec(value)?;
    let digest = Sha256::digest(&bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    Ok(out)
}

/// Per-run provenance record written next to every command's outputs.
/// Deliberately timestamp-free so identical runs produce identical files.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub tool_version: &'static str,
    pub checkpoint_format_version: u32,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, config_hash: String, seed: u64) -> Self {
        Manifest {
            command: command.to_owned(),
            config_hash,
            seed,
            tool_version: env!("CARGO_PKG_VERSION"),
            checkpoint_format_version: CHECKPOINT_FORMAT_VERSION,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn input(mut self, path: &Path) -> Self {
        self.inputs.push(path.display().to_string());
        self
    }

    pub fn output(mut self, path: &Path) -> Self {
        self.outputs.push(path.display().to_string());
        self
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        save_json_pretty(&dir.join("manifest.json"), self)
    }
}
