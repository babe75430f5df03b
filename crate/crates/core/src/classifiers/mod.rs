//! The five gait classifiers behind one fit/predict contract.
//!
//! Classical models consume PCA-projected features; the CNN consumes scaled
//! flattened windows and reshapes them internally.

pub mod knn;
pub mod logreg;
pub mod naive_bayes;
pub mod svm;

pub use knn::{knn_fit, KnnModel};
pub use logreg::{logreg_fit, LogRegConfig, LogRegModel};
pub use naive_bayes::{gnb_fit, GaussianNbModel, NaiveBayesConfig};
pub use svm::{svm_fit, Kernel, KernelSpec, SvmConfig, SvmModel};

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::cnn::{self, CnnArchitecture, CnnModel, Tensor4, TrainConfig};
use crate::error::{Error, Result};
use crate::ingest::GaitLabel;

pub trait Classifier {
    fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<GaitLabel>>;
}

pub(crate) fn check_matrix(x: ArrayView2<f64>, y: &[GaitLabel]) -> Result<()> {
    if x.nrows() == 0 || x.ncols() == 0 {
        return Err(Error::invalid("training matrix is empty"));
    }
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            actual: y.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("training matrix contains non-finite values"));
    }
    Ok(())
}

pub(crate) fn targets(y: &[GaitLabel]) -> Vec<f64> {
    y.iter().map(|l| l.encode() as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KnnConfig {
    pub k: usize,
}

impl Default for KnnConfig {
    fn default() -> Self {
        Self { k: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CnnConfig {
    /// Defaults to [`CnnArchitecture::for_window`] of the configured window length.
    pub architecture: Option<CnnArchitecture>,
    pub training: TrainConfig,
}

/// Model kind plus hyperparameters, as written in pipeline configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Knn(KnnConfig),
    LogisticRegression(LogRegConfig),
    NaiveBayes(NaiveBayesConfig),
    Svm(SvmConfig),
    Cnn(CnnConfig),
}

impl ModelSpec {
    /// All five models with default hyperparameters, in report order.
    pub fn all_defaults() -> Vec<ModelSpec> {
        vec![
            ModelSpec::Knn(KnnConfig::default()),
            ModelSpec::LogisticRegression(LogRegConfig::default()),
            ModelSpec::NaiveBayes(NaiveBayesConfig::default()),
            ModelSpec::Svm(SvmConfig::default()),
            ModelSpec::Cnn(CnnConfig::default()),
        ]
    }

    pub fn key(&self) -> &'static str {
        match self {
            ModelSpec::Knn(_) => "knn",
            ModelSpec::LogisticRegression(_) => "logistic_regression",
            ModelSpec::NaiveBayes(_) => "naive_bayes",
            ModelSpec::Svm(_) => "svm",
            ModelSpec::Cnn(_) => "cnn",
        }
    }

    /// Name used in result tables.
    pub fn display_name(&self) -> &'static str {
        match self {
            ModelSpec::Knn(_) => "KNN",
            ModelSpec::LogisticRegression(_) => "Logistic Regression",
            ModelSpec::NaiveBayes(_) => "Naive Bayes",
            ModelSpec::Svm(_) => "SVM",
            ModelSpec::Cnn(_) => "2D CNN",
        }
    }

    /// Whether the model is fed PCA projections (true) or scaled windows (false).
    pub fn uses_pca(&self) -> bool {
        !matches!(self, ModelSpec::Cnn(_))
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ModelSpec::Knn(c) if c.k == 0 || c.k % 2 == 0 => {
                Err(Error::invalid(format!("kNN k must be odd and positive, got {}", c.k)))
            }
            ModelSpec::Knn(_) => Ok(()),
            ModelSpec::LogisticRegression(c) => c.validate(),
            ModelSpec::NaiveBayes(c) if !(c.var_smoothing > 0.0) => {
                Err(Error::invalid("naive Bayes var_smoothing must be positive"))
            }
            ModelSpec::NaiveBayes(_) => Ok(()),
            ModelSpec::Svm(c) => c.validate(),
            ModelSpec::Cnn(c) => c.training.validate(),
        }
    }

    /// Fits on `x` (PCA features, or scaled flattened windows for the CNN).
    /// `seed` drives every random choice the model makes.
    pub fn fit(&self, x: ArrayView2<f64>, y: &[GaitLabel], window_len: usize, seed: u64) -> Result<TrainedModel> {
        Ok(self.fit_with_history(x, y, window_len, seed)?.0)
    }

    /// Like [`ModelSpec::fit`], also returning the per-epoch training loss
    /// (empty for models without an iterative loss).
    pub fn fit_with_history(
        &self,
        x: ArrayView2<f64>,
        y: &[GaitLabel],
        window_len: usize,
        seed: u64,
    ) -> Result<(TrainedModel, Vec<f64>)> {
        self.validate()?;
        Ok(match self {
            ModelSpec::Knn(c) => (TrainedModel::Knn(knn_fit(x, y, c.k)?), Vec::new()),
            ModelSpec::LogisticRegression(c) => {
                let m = logreg_fit(x, y, c)?;
                let history = m.loss_history.clone();
                (TrainedModel::LogisticRegression(m), history)
            }
            ModelSpec::NaiveBayes(c) => (TrainedModel::NaiveBayes(gnb_fit(x, y, c)?), Vec::new()),
            ModelSpec::Svm(c) => (TrainedModel::Svm(svm_fit(x, y, &SvmConfig { seed, ..*c })?), Vec::new()),
            ModelSpec::Cnn(c) => {
                check_matrix(x, y)?;
                let arch = c
                    .architecture
                    .clone()
                    .unwrap_or_else(|| CnnArchitecture::for_window(window_len));
                let model = CnnModel::new(arch, seed)?;
                let inputs = rows_to_tensor(x, &model)?;
                let train_cfg = TrainConfig { seed, ..c.training };
                let outcome = cnn::train(model, &inputs, y, &train_cfg)?;
                (TrainedModel::Cnn(outcome.model), outcome.loss_history)
            }
        })
    }
}

fn rows_to_tensor(x: ArrayView2<f64>, model: &CnnModel) -> Result<Tensor4> {
    let s = model.input_shape();
    Tensor4::from_rows(x, s.h, s.w, s.c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrainedModel {
    Knn(KnnModel),
    LogisticRegression(LogRegModel),
    NaiveBayes(GaussianNbModel),
    Svm(SvmModel),
    Cnn(CnnModel),
}

impl TrainedModel {
    pub fn key(&self) -> &'static str {
        match self {
            TrainedModel::Knn(_) => "knn",
            TrainedModel::LogisticRegression(_) => "logistic_regression",
            TrainedModel::NaiveBayes(_) => "naive_bayes",
            TrainedModel::Svm(_) => "svm",
            TrainedModel::Cnn(_) => "cnn",
        }
    }

    pub fn uses_pca(&self) -> bool {
        !matches!(self, TrainedModel::Cnn(_))
    }
}

impl Classifier for TrainedModel {
    fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<GaitLabel>> {
        match self {
            TrainedModel::Knn(m) => m.predict(x),
            TrainedModel::LogisticRegression(m) => m.predict(x),
            TrainedModel::NaiveBayes(m) => m.predict(x),
            TrainedModel::Svm(m) => m.predict(x),
            TrainedModel::Cnn(m) => m.predict_batch(&rows_to_tensor(x, m)?),
        }
    }
}
