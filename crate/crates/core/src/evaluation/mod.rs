//! Fold assignment, per-fold leakage-safe fitting, and per-class metrics.
//!
//! Each fold fits imputation medians, the scaler, PCA, and every configured
//! model on its training windows only, then scores the held-out windows.
//! Aggregate metrics come from the pooled confusion matrix.

mod metrics;
mod split;

pub use metrics::{compute_metrics, ClassMetrics, ConfusionMatrix, Metrics};
pub use split::{split, Fold, Protocol, SplitMode, SplitPlan};

use std::io::Write;

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifiers::{Classifier, ModelSpec};
use crate::error::{Error, Result};
use crate::ingest::{Dataset, GaitLabel};
use crate::pipeline::{
    clean_dataset, feature_matrix, fit_imputation, index_windows, FeatureTransforms, PipelineConfig, WindowRef,
};
use crate::scaling::{transform_checked, ScalerParams};
use crate::PartitionId;

pub const WINDOW_LEVEL_WARNING: &str = "window-level split: windows from one subject can appear in both \
training and test folds, so these scores may overstate accuracy on unseen subjects";

/// Scales `x` for evaluation in `fold`; refuses parameters not fitted on that fold's training part.
pub fn transform_for_fold(x: ArrayView2<f64>, scaler: &ScalerParams, fold: usize) -> Result<Array2<f64>> {
    transform_checked(x, scaler, &PartitionId::train_fold(fold))
}

/// Which partition each fitted transform came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldProvenance {
    pub imputation: PartitionId,
    pub scaler: PartitionId,
    pub pca: Option<PartitionId>,
    pub evaluated_on: PartitionId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub train_windows: usize,
    pub test_windows: usize,
    pub pca_components: Option<usize>,
    pub confusion: ConfusionMatrix,
    pub metrics: Metrics,
    pub provenance: FoldProvenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub algorithm: String,
    pub model: ModelSpec,
    pub folds: Vec<FoldReport>,
    pub pooled: ConfusionMatrix,
    pub aggregate: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub algorithm: String,
    pub f1_normal: f64,
    pub f1_abnormal: f64,
    pub accuracy: f64,
}

pub const TABLE_HEADER: &str = "algorithm,f1_normal,f1_abnormal,accuracy";

/// Results of all configured models under one split mode and protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationSummary {
    pub split_mode: SplitMode,
    pub protocol: Protocol,
    pub folds: usize,
    pub seed: u64,
    pub total_windows: usize,
    pub warning: Option<String>,
    pub config: PipelineConfig,
    pub reports: Vec<EvaluationReport>,
    pub table: Vec<TableRow>,
}

impl EvaluationSummary {
    /// CSV table; numbers use the shortest round-trip form, as in the JSON.
    pub fn write_table<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{TABLE_HEADER}")?;
        for row in &self.table {
            writeln!(
                out,
                "{},{},{},{}",
                row.algorithm, row.f1_normal, row.f1_abnormal, row.accuracy
            )?;
        }
        Ok(())
    }

    pub fn table_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_table(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("table is UTF-8")
    }
}

fn table_row(report: &EvaluationReport) -> TableRow {
    TableRow {
        algorithm: report.algorithm.clone(),
        f1_normal: report.aggregate.normal.f1,
        f1_abnormal: report.aggregate.abnormal.f1,
        accuracy: report.aggregate.accuracy,
    }
}

struct FoldResult {
    per_model: Vec<FoldReport>,
}

fn run_fold(
    dataset: &Dataset,
    windows: &[WindowRef],
    index: usize,
    fold: &Fold,
    config: &PipelineConfig,
) -> Result<FoldResult> {
    let part = PartitionId::train_fold(index);
    let window_len = config.window.window_len;
    let train_refs: Vec<WindowRef> = fold.train.iter().map(|&i| windows[i]).collect();
    let test_refs: Vec<WindowRef> = fold.test.iter().map(|&i| windows[i]).collect();

    let imputation = fit_imputation(dataset, &train_refs, window_len, part.clone())?;
    let clean = clean_dataset(dataset, &imputation, config.filter_spec().as_ref(), &part)?;
    let x_train = feature_matrix(&clean, &train_refs, window_len)?;
    let x_test = feature_matrix(&clean, &test_refs, window_len)?;

    let any_pca = config.models.iter().any(ModelSpec::uses_pca);
    let transforms = FeatureTransforms::fit(x_train.view(), config.scaler, any_pca.then_some(config.pca), &part)?;
    let train = transforms.apply(x_train.view(), &part)?;
    let test = transforms.apply(x_test.view(), &part)?;

    let y_train: Vec<GaitLabel> = train_refs.iter().map(|r| r.label).collect();
    let y_test: Vec<GaitLabel> = test_refs.iter().map(|r| r.label).collect();
    let provenance = FoldProvenance {
        imputation: imputation.fitted_on.clone(),
        scaler: transforms.scaler.fitted_on.clone(),
        pca: transforms.pca.as_ref().map(|p| p.fitted_on.clone()),
        evaluated_on: PartitionId::test_fold(index),
    };

    let mut per_model = Vec::with_capacity(config.models.len());
    for spec in &config.models {
        let uses_pca = spec.uses_pca();
        let model = spec.fit(train.for_model(uses_pca)?, &y_train, window_len, config.seed)?;
        let predicted = model.predict(test.for_model(uses_pca)?)?;
        let confusion = ConfusionMatrix::from_predictions(&y_test, &predicted)?;
        per_model.push(FoldReport {
            fold: index,
            train_windows: train_refs.len(),
            test_windows: test_refs.len(),
            pca_components: if uses_pca {
                transforms.pca.as_ref().map(|p| p.n_components())
            } else {
                None
            },
            confusion,
            metrics: compute_metrics(&confusion)?,
            provenance: FoldProvenance {
                pca: if uses_pca { provenance.pca.clone() } else { None },
                ..provenance.clone()
            },
        });
    }
    Ok(FoldResult { per_model })
}

/// Runs every configured model through every fold of `plan`.
///
/// Folds run in parallel and share no fitted state; results are assembled in
/// fold order, so the output does not depend on scheduling.
pub fn cross_validate(dataset: &Dataset, config: &PipelineConfig, plan: &SplitPlan) -> Result<EvaluationSummary> {
    config.validate()?;
    plan.validate()?;
    let windows = index_windows(dataset, &config.window)?;
    let folds = split(&windows, plan)?;
    let results: Vec<FoldResult> = folds
        .par_iter()
        .enumerate()
        .map(|(i, fold)| run_fold(dataset, &windows, i, fold, config))
        .collect::<Result<_>>()?;

    let mut reports = Vec::with_capacity(config.models.len());
    for (m, spec) in config.models.iter().enumerate() {
        let fold_reports: Vec<FoldReport> = results.iter().map(|r| r.per_model[m].clone()).collect();
        let pooled = fold_reports
            .iter()
            .fold(ConfusionMatrix::default(), |acc, f| acc.merge(&f.confusion));
        reports.push(EvaluationReport {
            algorithm: spec.display_name().to_string(),
            model: spec.clone(),
            aggregate: compute_metrics(&pooled)?,
            pooled,
            folds: fold_reports,
        });
    }
    let evaluated: u64 = reports[0].pooled.total();
    if plan.protocol == Protocol::KFold && evaluated as usize != windows.len() {
        return Err(Error::invalid(format!(
            "internal: {} windows evaluated, dataset has {}",
            evaluated,
            windows.len()
        )));
    }
    let table = reports.iter().map(table_row).collect();
    Ok(EvaluationSummary {
        split_mode: plan.mode,
        protocol: plan.protocol,
        folds: folds.len(),
        seed: plan.seed,
        total_windows: windows.len(),
        warning: (plan.mode == SplitMode::WindowLevel).then(|| WINDOW_LEVEL_WARNING.to_string()),
        config: config.clone(),
        reports,
        table,
    })
}
