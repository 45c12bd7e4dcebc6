//! Run manifests: every command writes one so a run is reproducible from its
//! manifest alone (resolved config + seed fully determine outputs).

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seed: u64,
    /// Content hash of the input files, independent of paths and platform.
    pub input_hash: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<serde_json::Value>,
    pub nfe_total: u64,
    pub wall_clock_secs: f64,
}

/// Blob-style content hash over the given files, in argument order.
///
/// Each file contributes `blob <len>\0<bytes>`; the digest is hex-encoded
/// SHA-256, so it is stable across platforms and path layouts.
pub fn content_hash(paths: &[&Path]) -> Result<String> {
    let mut hasher = Sha256::new();
    for path in paths {
        let bytes = fs::read(path).with_context(|| format!("hashing {}", path.display()))?;
        hasher.update(format!("blob {}\0", bytes.len()).as_bytes());
        hasher.update(&bytes);
    }
    Ok(hex(&hasher.finalize()))
}

/// Hash of an in-memory blob (used for config_hash in metric reports).
pub fn blob_hash(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(format!("blob {}\0", bytes.len()).as_bytes());
    hasher.update(bytes);
    hex(&hasher.finalize())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn write_manifest(out_dir: &Path, manifest: &RunManifest) -> Result<()> {
    fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;
    let path = out_dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(manifest)?)
        .with_context(|| format!("writing {}", path.display()))
}
