//! On-disk model archive: pretty-printed JSON with explicit shapes and
//! shortest round-trip decimal floats, so a reloaded model predicts
//! bit-for-bit the same values.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::training::FittedModel;

pub const FORMAT_VERSION: u32 = 1;

/// Column roles the model was trained with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveSchema {
    pub response: String,
    pub explanatory: Vec<String>,
    pub contextual: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    /// SHA-256 of the canonical JSON of the run configuration.
    pub config_digest: String,
    pub mode: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArchive {
    pub format_version: u32,
    pub model: FittedModel,
    pub schema: ArchiveSchema,
    /// Mean training response, the intercept-only baseline for evaluation.
    pub train_response_mean: f64,
    pub provenance: Provenance,
}

impl ModelArchive {
    pub fn new(model: FittedModel, schema: ArchiveSchema, train_response_mean: f64, provenance: Provenance) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            model,
            schema,
            train_response_mean,
            provenance,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let archive: ModelArchive =
            serde_json::from_str(&text).map_err(|e| Error::Archive(format!("{}: {e}", path.display())))?;
        if archive.format_version != FORMAT_VERSION {
            return Err(Error::Archive(format!(
                "{}: format version {} is not supported (expected {FORMAT_VERSION})",
                path.display(),
                archive.format_version
            )));
        }
        archive.model.network.validate()?;
        if let Some(p) = &archive.model.polished_network {
            p.validate()?;
        }
        if archive.schema.explanatory.len() != archive.model.p() || archive.schema.contextual.len() != archive.model.m()
        {
            return Err(Error::Archive("schema does not match the network dimensions".into()));
        }
        Ok(archive)
    }
}

pub fn digest<T: Serialize>(value: &T) -> Result<String> {
    let bytes = serde_json::to_vec(value)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}
