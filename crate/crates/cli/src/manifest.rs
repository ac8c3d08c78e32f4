//! Reproducibility envelope: every output directory gets exactly one
//! manifest recording the resolved argv, config snapshot, and content
//! hashes of the inputs. `run_id` is derived from those, so re-running
//! the same command reproduces the same id (timestamps live only here).

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::Context;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_hash(path: &Path) -> anyhow::Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

/// Deterministic run id: a short hash over the config snapshot and input
/// hashes.
pub fn run_id(config_snapshot: &serde_json::Value, input_hashes: &[&str]) -> String {
    let mut material = serde_json::to_string(config_snapshot).expect("config serializes");
    for h in input_hashes {
        material.push(':');
        material.push_str(h);
    }
    sha256_hex(material.as_bytes())[..12].to_string()
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub command: String,
    pub config_snapshot: serde_json::Value,
    pub pool_hash: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calibration_hash: Option<String>,
    pub started_at: u64,
    pub finished_at: u64,
    pub versions: String,
}

fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl RunManifest {
    pub fn new(
        command: &str,
        config_snapshot: serde_json::Value,
        pool_hash: String,
        calibration_hash: Option<String>,
    ) -> Self {
        let mut hashes = vec![pool_hash.as_str()];
        if let Some(h) = &calibration_hash {
            hashes.push(h.as_str());
        }
        RunManifest {
            run_id: run_id(&config_snapshot, &hashes),
            command: command.to_string(),
            config_snapshot,
            pool_hash,
            calibration_hash,
            started_at: now(),
            finished_at: 0,
            versions: format!("proctor {}", env!("CARGO_PKG_VERSION")),
        }
    }

    /// Stamp the finish time and write `manifest.json` under `dir`.
    pub fn finish_and_write(mut self, dir: &Path) -> anyhow::Result<()> {
        self.finished_at = now();
        let path = dir.join("manifest.json");
        let body = serde_json::to_string_pretty(&self).expect("manifest serializes");
        std::fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }
}

/// The exact argv (without the program name), for byte-identical re-runs.
pub fn argv_snapshot() -> Vec<String> {
    std::env::args().skip(1).collect()
}
