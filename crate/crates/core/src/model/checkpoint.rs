//! Versioned JSON model checkpoints.
//!
//! A checkpoint is a single JSON document `{"version": 1, "model": ...}`
//! holding every parameter group, the architecture dimensions, and the
//! freeze flags. Serialization is deterministic (fixed field order,
//! shortest-round-trip floats), so identical states produce byte-identical
//! files.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ModelState;
use crate::{Error, Result};

const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    model: ModelState,
}

pub fn save_model(state: &ModelState, path: &Path) -> Result<()> {
    let doc = Checkpoint { version: CHECKPOINT_VERSION, model: state.clone() };
    let mut bytes = serde_json::to_vec(&doc)?;
    bytes.push(b'\n');
    fs::write(path, bytes)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<ModelState> {
    let bytes = fs::read(path)?;
    let doc: Checkpoint = serde_json::from_slice(&bytes)?;
    if doc.version != CHECKPOINT_VERSION {
        return Err(Error::Validation(format!(
            "checkpoint version {} unsupported (expected {CHECKPOINT_VERSION})",
            doc.version
        )));
    }
    Ok(doc.model)
}
