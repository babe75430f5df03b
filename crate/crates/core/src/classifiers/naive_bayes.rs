use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::{check_matrix, Classifier};
use crate::error::{Error, Result};
use crate::ingest::GaitLabel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NaiveBayesConfig {
    /// Variance floor as a fraction of the largest feature variance.
    pub var_smoothing: f64,
}

impl Default for NaiveBayesConfig {
    fn default() -> Self {
        Self { var_smoothing: 1e-9 }
    }
}

/// Gaussian naive Bayes. Row 0 of `means`/`variances` is the normal class,
/// row 1 the abnormal class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianNbModel {
    pub priors: [f64; 2],
    pub means: Array2<f64>,
    pub variances: Array2<f64>,
    pub epsilon: f64,
}

pub fn gnb_fit(x: ArrayView2<f64>, y: &[GaitLabel], config: &NaiveBayesConfig) -> Result<GaussianNbModel> {
    check_matrix(x, y)?;
    if !(config.var_smoothing > 0.0) {
        return Err(Error::invalid("naive Bayes var_smoothing must be positive"));
    }
    let d = x.ncols();
    let max_var = x.axis_iter(Axis(1)).map(|c| c.var(0.0)).fold(0.0f64, f64::max);
    let epsilon = if max_var > 0.0 {
        config.var_smoothing * max_var
    } else {
        config.var_smoothing
    };

    let mut means = Array2::zeros((2, d));
    let mut variances = Array2::zeros((2, d));
    let mut priors = [0.0; 2];
    for label in GaitLabel::ALL {
        let rows: Vec<usize> = (0..y.len()).filter(|&i| y[i] == label).collect();
        if rows.is_empty() {
            return Err(Error::SingleClass);
        }
        let class_x = x.select(Axis(0), &rows);
        let c = label.encode() as usize;
        priors[c] = rows.len() as f64 / y.len() as f64;
        means.row_mut(c).assign(&class_x.mean_axis(Axis(0)).expect("nonempty"));
        variances
            .row_mut(c)
            .assign(&class_x.var_axis(Axis(0), 0.0).mapv(|v| v.max(epsilon)));
    }
    Ok(GaussianNbModel {
        priors,
        means,
        variances,
        epsilon,
    })
}

impl GaussianNbModel {
    fn joint_log_likelihood(&self, q: ArrayView1<f64>) -> [f64; 2] {
        std::array::from_fn(|c| {
            let mut ll = self.priors[c].ln();
            for ((&x, &mu), &var) in q.iter().zip(self.means.row(c)).zip(self.variances.row(c)) {
                ll -= 0.5 * ((2.0 * std::f64::consts::PI * var).ln() + (x - mu) * (x - mu) / var);
            }
            ll
        })
    }

    /// Posterior `[P(normal), P(abnormal)]` per row, normalised in log space.
    pub fn predict_proba(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.means.ncols() {
            return Err(Error::DimensionMismatch {
                expected: self.means.ncols(),
                actual: x.ncols(),
            });
        }
        let mut out = Array2::zeros((x.nrows(), 2));
        for (mut row, q) in out.rows_mut().into_iter().zip(x.rows()) {
            let jll = self.joint_log_likelihood(q);
            let m = jll[0].max(jll[1]);
            let log_norm = m + ((jll[0] - m).exp() + (jll[1] - m).exp()).ln();
            row.assign(&Array1::from_iter(jll.iter().map(|l| (l - log_norm).exp())));
        }
        Ok(out)
    }
}

impl Classifier for GaussianNbModel {
    fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<GaitLabel>> {
        Ok(self
            .predict_proba(x)?
            .rows()
            .into_iter()
            .map(|p| {
                if p[1] > p[0] {
                    GaitLabel::Abnormal
                } else {
                    GaitLabel::Normal
                }
            })
            .collect())
    }
}
