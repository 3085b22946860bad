//! Run manifests: written into the output directory before any training
//! starts, carrying the resolved configuration snapshot that suffices to
//! reproduce the run.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::config::RunConfig;
use crate::CliError;

/// Everything that determines a run's artifacts. Two runs with equal
/// snapshots produce byte-identical checkpoints and reports.
#[derive(Debug, Clone, Serialize)]
pub struct ManifestSnapshot {
    pub command: String,
    pub config_path: Option<String>,
    pub config: RunConfig,
    pub seeds: Vec<u64>,
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub snapshot: ManifestSnapshot,
    /// Informational timestamp; not part of the snapshot.
    pub created_at_unix: u64,
}

pub fn write_manifest(out_dir: &Path, snapshot: ManifestSnapshot) -> Result<(), CliError> {
    let manifest = RunManifest {
        snapshot,
        created_at_unix: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    };
    let mut bytes = serde_json::to_vec_pretty(&manifest)
        .map_err(|e| CliError::Run(format!("manifest serialization: {e}")))?;
    bytes.push(b'\n');
    std::fs::write(out_dir.join("manifest.json"), bytes)
        .map_err(|e| CliError::Run(format!("cannot write manifest: {e}")))?;
    Ok(())
}
