//! Checkpoint format for ensembles and predictors.
//!
//! Files are JSON with a `format_version` field; network parameters are
//! stored as row-major `(out_dim, in_dim)` arrays with explicit shapes.
//! serde_json emits shortest round-trip float literals, so save/load is
//! bit-exact and experiments can resume deterministically.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bonus::{PredictorState, TargetEnsemble};
use crate::error::{DrndError, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Envelope<T> {
    format_version: u32,
    kind: String,
    payload: T,
}

fn save<T: Serialize>(path: &Path, kind: &str, payload: &T) -> Result<()> {
    let file = File::create(path)?;
    let env = Envelope {
        format_version: FORMAT_VERSION,
        kind: kind.to_string(),
        payload,
    };
    serde_json::to_writer(BufWriter::new(file), &env)?;
    Ok(())
}

fn load<T: for<'de> Deserialize<'de>>(path: &Path, kind: &str) -> Result<T> {
    let file = File::open(path)?;
    let env: Envelope<T> = serde_json::from_reader(BufReader::new(file))?;
    if env.format_version != FORMAT_VERSION {
        return Err(DrndError::Config(format!(
            "unsupported checkpoint version {} (expected {FORMAT_VERSION})",
            env.format_version
        )));
    }
    if env.kind != kind {
        return Err(DrndError::Config(format!(
            "checkpoint kind '{}' does not match expected '{kind}'",
            env.kind
        )));
    }
    Ok(env.payload)
}

pub fn save_ensemble(path: &Path, ens: &TargetEnsemble) -> Result<()> {
    save(path, "target_ensemble", ens)
}

pub fn load_ensemble(path: &Path) -> Result<TargetEnsemble> {
    load(path, "target_ensemble")
}

pub fn save_predictor(path: &Path, pred: &PredictorState) -> Result<()> {
    save(path, "predictor", pred)
}

pub fn load_predictor(path: &Path) -> Result<PredictorState> {
    load(path, "predictor")
}
