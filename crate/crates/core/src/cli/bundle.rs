use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::pipeline::{FittedPipeline, PipelineConfig};

pub const BUNDLE_FORMAT: u32 = 1;

/// A trained pipeline plus what is needed to audit and reproduce it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub format_version: u32,
    /// The only field that differs between two runs with identical inputs.
    pub created_at: String,
    /// Effective config with `models` narrowed to the trained model.
    pub config: PipelineConfig,
    /// SHA-256 of the training data file.
    pub data_fingerprint: String,
    pub feature_dim: usize,
    pub training_windows: usize,
    pub pipeline: FittedPipeline,
}

impl ModelBundle {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let bundle: Self = serde_json::from_str(&text)?;
        if bundle.format_version != BUNDLE_FORMAT {
            return Err(Error::invalid(format!(
                "unsupported bundle format {} (expected {BUNDLE_FORMAT})",
                bundle.format_version
            )));
        }
        Ok(bundle)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub fn fingerprint(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
