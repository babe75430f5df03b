//! Abnormal-gait detection from smartphone inertial recordings.
//!
//! The pipeline runs end to end over 6-channel (tri-axial accelerometer plus
//! tri-axial gyroscope) recordings sampled at a fixed rate:
//!
//! ```text
//! ingest -> impute -> low-pass filter -> window -> flatten -> scale -> PCA -> classifier
//!                                                              \-> reshape -> CNN
//! ```
//!
//! Every fitted transform (imputation medians, scaler, PCA) carries a
//! [`PartitionId`] naming the data it was fitted on, so the evaluation
//! harness can refuse to apply test-fitted parameters.
//!
//! [`synthgen`] provides a seeded generator of separable normal/abnormal
//! recordings so the whole pipeline can be exercised without private data.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classifiers;
pub mod cli;
pub mod cnn;
pub mod error;
pub mod evaluation;
pub mod ingest;
pub mod pca;
pub mod pipeline;
pub mod preprocess;
pub mod scaling;
pub mod synthgen;
pub mod windowing;

pub use error::{Error, Result};
pub use ingest::{Dataset, GaitLabel, Recording, Sample, CHANNELS, CHANNEL_NAMES};

use serde::{Deserialize, Serialize};
use std::fmt;

/// Identifies the data partition a transform was fitted on, e.g. `fold-2/train`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PartitionId(pub String);

impl PartitionId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn train_fold(fold: usize) -> Self {
        Self(format!("fold-{fold}/train"))
    }

    pub fn test_fold(fold: usize) -> Self {
        Self(format!("fold-{fold}/test"))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for PartitionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}
