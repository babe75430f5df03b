//! Pipeline configuration and the feature chain shared by cross-validation,
//! training, and prediction.
//!
//! Feature extraction for one partition runs impute -> filter -> window ->
//! flatten -> scale -> (PCA). Imputation medians, the scaler, and PCA are fitted
//! on the training windows only and tagged with the training [`PartitionId`];
//! applying them checks that tag.

use std::path::PathBuf;

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifiers::{Classifier, ModelSpec, TrainedModel};
use crate::error::{Error, Result};
use crate::evaluation::SplitPlan;
use crate::ingest::{Dataset, GaitLabel, Recording};
use crate::pca::{fit_pca, project_checked, PcaModel, PcaTarget};
use crate::preprocess::{filter_recording, fit_median, impute_recording, FilterSpec, ImputationParams};
use crate::scaling::{fit_scaler, transform_checked, ScalerKind, ScalerParams};
use crate::windowing::{window_at, WindowPlan};
use crate::PartitionId;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub enabled: bool,
    pub order: usize,
    pub cutoff_hz: f64,
    pub zero_phase: bool,
}

impl Default for FilterConfig {
    fn default() -> Self {
        let spec = FilterSpec::default();
        Self {
            enabled: true,
            order: spec.order,
            cutoff_hz: spec.cutoff_hz,
            zero_phase: spec.zero_phase,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub sample_rate_hz: u32,
    /// Seconds dropped from the start and end of each raw log by `ingest`.
    pub trim_head_s: f64,
    pub trim_tail_s: f64,
    /// Required recording length after trimming, unless `variable_length` is set.
    pub duration_s: f64,
    pub variable_length: bool,
    pub filter: FilterConfig,
    pub window: WindowPlan,
    pub scaler: ScalerKind,
    pub pca: PcaTarget,
    pub models: Vec<ModelSpec>,
    pub split: SplitPlan,
    pub seed: u64,
    /// Canonical CSV used by `train` and `evaluate` when no positional path is given.
    pub data: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            sample_rate_hz: 50,
            trim_head_s: 3.0,
            trim_tail_s: 3.0,
            duration_s: 60.0,
            variable_length: false,
            filter: FilterConfig::default(),
            window: WindowPlan::default(),
            scaler: ScalerKind::default(),
            pca: PcaTarget::default(),
            models: ModelSpec::all_defaults(),
            split: SplitPlan::default(),
            seed: 42,
            data: None,
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn filter_spec(&self) -> Option<FilterSpec> {
        self.filter.enabled.then_some(FilterSpec {
            order: self.filter.order,
            cutoff_hz: self.filter.cutoff_hz,
            sample_rate_hz: self.sample_rate_hz as f64,
            zero_phase: self.filter.zero_phase,
        })
    }

    /// Checks every module invariant the config touches.
    pub fn validate(&self) -> Result<()> {
        let cfg = |e: Error| Error::Config(e.to_string());
        if self.sample_rate_hz == 0 {
            return Err(Error::Config("sample_rate_hz must be positive".into()));
        }
        if !(self.trim_head_s >= 0.0 && self.trim_tail_s >= 0.0) {
            return Err(Error::Config("trim durations must be non-negative".into()));
        }
        if !(self.duration_s > 0.0) {
            return Err(Error::Config("duration_s must be positive".into()));
        }
        if let Some(spec) = self.filter_spec() {
            spec.validate().map_err(cfg)?;
        }
        self.window.validate().map_err(cfg)?;
        self.pca.validate().map_err(cfg)?;
        self.split.validate().map_err(cfg)?;
        if self.models.is_empty() {
            return Err(Error::Config("at least one model must be configured".into()));
        }
        for m in &self.models {
            m.validate().map_err(cfg)?;
        }
        Ok(())
    }
}

/// One window of a dataset: recording index, start offset, label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowRef {
    pub recording: usize,
    pub start: usize,
    pub label: GaitLabel,
}

/// Enumerates every window of every recording, in recording order.
pub fn index_windows(dataset: &Dataset, plan: &WindowPlan) -> Result<Vec<WindowRef>> {
    plan.validate()?;
    let mut refs = Vec::new();
    for (i, rec) in dataset.recordings.iter().enumerate() {
        if rec.len() < plan.window_len {
            return Err(Error::TooShort {
                context: format!("windowing recording `{}`", rec.subject_id),
                required: plan.window_len,
                actual: rec.len(),
            });
        }
        refs.extend(plan.starts(rec.len()).map(|start| WindowRef {
            recording: i,
            start,
            label: rec.label,
        }));
    }
    Ok(refs)
}

pub(crate) fn require_partition(found: &PartitionId, required: &PartitionId) -> Result<()> {
    if found != required {
        return Err(Error::Leakage {
            expected: required.to_string(),
            found: found.to_string(),
        });
    }
    Ok(())
}

/// Medians over the samples covered by `refs` only.
pub fn fit_imputation(
    dataset: &Dataset,
    refs: &[WindowRef],
    window_len: usize,
    partition: PartitionId,
) -> Result<ImputationParams> {
    let samples = refs
        .iter()
        .flat_map(|r| &dataset.recordings[r.recording].samples[r.start..r.start + window_len]);
    fit_median(samples, partition)
}

/// Imputes with `imputation` (which must carry `partition`) and low-pass filters.
pub fn clean_recording(
    rec: &Recording,
    imputation: &ImputationParams,
    filter: Option<&FilterSpec>,
    partition: &PartitionId,
) -> Result<Recording> {
    require_partition(&imputation.fitted_on, partition)?;
    let imputed = impute_recording(rec, imputation);
    match filter {
        Some(spec) => filter_recording(&imputed, spec),
        None => Ok(imputed),
    }
}

pub fn clean_dataset(
    dataset: &Dataset,
    imputation: &ImputationParams,
    filter: Option<&FilterSpec>,
    partition: &PartitionId,
) -> Result<Vec<Recording>> {
    dataset
        .recordings
        .par_iter()
        .map(|rec| clean_recording(rec, imputation, filter, partition))
        .collect()
}

/// Flattened windows as rows of an `n x (window_len * 6)` matrix.
pub fn feature_matrix(recordings: &[Recording], refs: &[WindowRef], window_len: usize) -> Result<Array2<f64>> {
    let dim = window_len * crate::CHANNELS;
    let mut out = Array2::zeros((refs.len(), dim));
    for (mut row, r) in out.rows_mut().into_iter().zip(refs) {
        let w = window_at(&recordings[r.recording], window_len, r.start)?;
        row.assign(&w.flatten());
    }
    Ok(out)
}

/// Scaled features plus, when a PCA model is present, their projections.
#[derive(Debug, Clone)]
pub struct Features {
    pub scaled: Array2<f64>,
    pub projected: Option<Array2<f64>>,
}

impl Features {
    /// The matrix a model consumes: PCA scores for classical models, scaled windows for the CNN.
    pub fn for_model(&self, uses_pca: bool) -> Result<ArrayView2<'_, f64>> {
        if uses_pca {
            self.projected
                .as_ref()
                .map(|p| p.view())
                .ok_or_else(|| Error::invalid("model needs PCA features but no PCA was fitted"))
        } else {
            Ok(self.scaled.view())
        }
    }
}

/// Scaler and optional PCA fitted on one training partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTransforms {
    pub scaler: ScalerParams,
    pub pca: Option<PcaModel>,
}

impl FeatureTransforms {
    pub fn fit(
        x_train: ArrayView2<f64>,
        scaler: ScalerKind,
        pca: Option<PcaTarget>,
        partition: &PartitionId,
    ) -> Result<Self> {
        let scaler = fit_scaler(scaler, x_train, partition.clone())?;
        let pca = match pca {
            Some(target) => {
                let scaled = transform_checked(x_train, &scaler, partition)?;
                Some(fit_pca(scaled.view(), target, partition.clone())?)
            }
            None => None,
        };
        Ok(Self { scaler, pca })
    }

    /// Applies the fitted transforms; fails unless they were fitted on `partition`.
    pub fn apply(&self, x: ArrayView2<f64>, partition: &PartitionId) -> Result<Features> {
        let scaled = transform_checked(x, &self.scaler, partition)?;
        let projected = match &self.pca {
            Some(p) => Some(project_checked(scaled.view(), p, partition)?),
            None => None,
        };
        Ok(Features { scaled, projected })
    }
}

/// Partition tag for transforms fitted on a whole dataset by `train`.
pub fn full_training_partition() -> PartitionId {
    PartitionId::new("all/train")
}

/// Everything needed to classify a new recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedPipeline {
    pub imputation: ImputationParams,
    pub filter: Option<FilterSpec>,
    pub window: WindowPlan,
    pub transforms: FeatureTransforms,
    pub model: TrainedModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowPrediction {
    pub start_index: usize,
    pub label: GaitLabel,
}

impl FittedPipeline {
    pub fn feature_dim(&self) -> usize {
        self.window.feature_dim()
    }

    fn partition(&self) -> &PartitionId {
        &self.transforms.scaler.fitted_on
    }

    pub fn predict_recording(&self, rec: &Recording) -> Result<Vec<WindowPrediction>> {
        if let Some(spec) = &self.filter {
            if rec.sample_rate_hz as f64 != spec.sample_rate_hz {
                return Err(Error::invalid(format!(
                    "recording is sampled at {} Hz but the model was trained at {} Hz",
                    rec.sample_rate_hz, spec.sample_rate_hz
                )));
            }
        }
        if rec.len() < self.window.window_len {
            return Err(Error::TooShort {
                context: format!("predicting recording `{}`", rec.subject_id),
                required: self.window.window_len,
                actual: rec.len(),
            });
        }
        let partition = self.partition().clone();
        let clean = clean_recording(rec, &self.imputation, self.filter.as_ref(), &partition)?;
        let refs: Vec<WindowRef> = self
            .window
            .starts(clean.len())
            .map(|start| WindowRef {
                recording: 0,
                start,
                label: rec.label,
            })
            .collect();
        let x = feature_matrix(std::slice::from_ref(&clean), &refs, self.window.window_len)?;
        let features = self.transforms.apply(x.view(), &partition)?;
        let labels = self.model.predict(features.for_model(self.model.uses_pca())?)?;
        Ok(refs
            .iter()
            .zip(labels)
            .map(|(r, label)| WindowPrediction {
                start_index: r.start,
                label,
            })
            .collect())
    }
}

/// Fitted pipeline plus the per-epoch training loss (CNN and logistic regression).
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedPipeline {
    pub pipeline: FittedPipeline,
    pub loss_history: Vec<f64>,
}

/// Fits the whole chain and one model on every window of `dataset`.
pub fn fit_pipeline(dataset: &Dataset, config: &PipelineConfig, spec: &ModelSpec) -> Result<TrainedPipeline> {
    config.validate()?;
    let partition = full_training_partition();
    let window_len = config.window.window_len;
    let refs = index_windows(dataset, &config.window)?;
    let imputation = fit_imputation(dataset, &refs, window_len, partition.clone())?;
    let filter = config.filter_spec();
    let clean = clean_dataset(dataset, &imputation, filter.as_ref(), &partition)?;
    let x = feature_matrix(&clean, &refs, window_len)?;
    let labels: Vec<GaitLabel> = refs.iter().map(|r| r.label).collect();
    let pca = spec.uses_pca().then_some(config.pca);
    let transforms = FeatureTransforms::fit(x.view(), config.scaler, pca, &partition)?;
    let features = transforms.apply(x.view(), &partition)?;
    let (model, loss_history) =
        spec.fit_with_history(features.for_model(spec.uses_pca())?, &labels, window_len, config.seed)?;
    Ok(TrainedPipeline {
        pipeline: FittedPipeline {
            imputation,
            filter,
            window: config.window,
            transforms,
            model,
        },
        loss_history,
    })
}

/// Majority vote over window labels; an even split goes to Abnormal.
pub fn majority_verdict(labels: &[GaitLabel]) -> Option<GaitLabel> {
    if labels.is_empty() {
        return None;
    }
    let abnormal = labels.iter().filter(|&&l| l == GaitLabel::Abnormal).count();
    Some(if 2 * abnormal >= labels.len() {
        GaitLabel::Abnormal
    } else {
        GaitLabel::Normal
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_validates_and_round_trips() {
        let cfg = PipelineConfig::default();
        cfg.validate().unwrap();
        let json = serde_json::to_string(&cfg).unwrap();
        assert_eq!(PipelineConfig::from_json(&json).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = PipelineConfig::from_json(r#"{"windw": {"window_len": 10, "hop": 10}}"#).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
    }

    #[test]
    fn partial_config_fills_defaults() {
        let cfg = PipelineConfig::from_json(r#"{"seed": 7, "models": [{"kind": "knn", "k": 3}]}"#).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.window, WindowPlan::default());
        assert_eq!(cfg.models.len(), 1);
    }

    #[test]
    fn invalid_nested_values_rejected() {
        assert!(PipelineConfig::from_json(r#"{"filter": {"cutoff_hz": 30.0}}"#).is_err());
        assert!(PipelineConfig::from_json(r#"{"models": []}"#).is_err());
        assert!(PipelineConfig::from_json(r#"{"split": {"k_folds": 1}}"#).is_err());
    }

    #[test]
    fn majority_ties_go_abnormal() {
        use GaitLabel::*;
        assert_eq!(majority_verdict(&[Normal, Abnormal]), Some(Abnormal));
        assert_eq!(majority_verdict(&[Normal, Normal, Abnormal]), Some(Normal));
        assert_eq!(majority_verdict(&[Normal; 4]), Some(Normal));
        assert_eq!(majority_verdict(&[]), None);
    }
}
