//! Principal component analysis over flattened, scaled windows.
//!
//! Eigenvalues are those of the population covariance (divide by `n`), so
//! their sum equals the total per-column variance of the training matrix.
//! When there are fewer samples than features the eigenproblem is solved on
//! the `n x n` Gram matrix instead of the `d x d` covariance; both give the
//! same nonzero spectrum.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::PartitionId;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PcaTarget {
    Components(usize),
    VarianceFraction(f64),
}

impl Default for PcaTarget {
    fn default() -> Self {
        PcaTarget::VarianceFraction(0.95)
    }
}

impl PcaTarget {
    pub fn validate(&self) -> Result<()> {
        match *self {
            PcaTarget::Components(0) => Err(Error::invalid("PCA component count must be at least 1")),
            PcaTarget::VarianceFraction(f) if !(f > 0.0 && f <= 1.0) => Err(Error::invalid(format!(
                "PCA variance fraction must lie in (0, 1], got {f}"
            ))),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Array1<f64>,
    /// `k x d`, one orthonormal principal axis per row.
    pub components: Array2<f64>,
    /// Descending population-covariance eigenvalues of the retained axes.
    pub explained_variance: Array1<f64>,
    /// Total variance of the training data (trace of the covariance).
    pub total_variance: f64,
    pub fitted_on: PartitionId,
}

impl PcaModel {
    pub fn n_components(&self) -> usize {
        self.components.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn explained_variance_ratio(&self) -> Array1<f64> {
        if self.total_variance > 0.0 {
            &self.explained_variance / self.total_variance
        } else {
            Array1::zeros(self.explained_variance.len())
        }
    }
}

/// Full descending spectrum and unit eigenvectors (as rows) of the population covariance.
fn spectrum(centered: &Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    let (n, d) = centered.dim();
    let nf = n as f64;
    let max_rank = d.min(n.saturating_sub(1)).max(1);
    if d <= n {
        let cov = centered.t().dot(centered) / nf;
        let (vals, vecs) = sym_eigen_desc(&cov);
        let axes = Array2::from_shape_fn((d, d), |(i, j)| vecs[[j, i]]);
        (vals, axes)
    } else {
        let gram = centered.dot(&centered.t()) / nf;
        let (vals, vecs) = sym_eigen_desc(&gram);
        let k = max_rank;
        let mut axes = Array2::zeros((k, d));
        for i in 0..k {
            let u = vecs.column(i);
            let mut v = centered.t().dot(&u);
            // orthogonalise against earlier axes; only matters for near-null directions
            for j in 0..i {
                let prev = axes.row(j);
                let proj = prev.dot(&v);
                v.scaled_add(-proj, &prev);
            }
            let norm = v.dot(&v).sqrt();
            if norm > 0.0 {
                v /= norm;
            }
            axes.row_mut(i).assign(&v);
        }
        (vals[..k].to_vec(), axes)
    }
}

/// Eigen-decomposition of a symmetric matrix, eigenvalues descending and
/// clamped at zero, eigenvectors as columns.
fn sym_eigen_desc(m: &Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    let p = m.nrows();
    let dm = DMatrix::from_fn(p, p, |i, j| 0.5 * (m[[i, j]] + m[[j, i]]));
    let eig = SymmetricEigen::new(dm);
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let vecs = Array2::from_shape_fn((p, p), |(r, c)| eig.eigenvectors[(r, order[c])]);
    (vals, vecs)
}

fn apply_sign_convention(axes: &mut Array2<f64>) {
    for mut row in axes.rows_mut() {
        let mut best = 0usize;
        for (j, v) in row.iter().enumerate() {
            if v.abs() > row[best].abs() {
                best = j;
            }
        }
        if row[best] < 0.0 {
            row.mapv_inplace(|v| -v);
        }
    }
}

pub fn fit_pca(x: ArrayView2<f64>, target: PcaTarget, fitted_on: PartitionId) -> Result<PcaModel> {
    target.validate()?;
    let (n, d) = x.dim();
    if n < 2 {
        return Err(Error::invalid(format!("PCA needs at least 2 rows, got {n}")));
    }
    if d == 0 {
        return Err(Error::invalid("PCA needs at least one column"));
    }
    let mean = x.mean_axis(Axis(0)).expect("n >= 2");
    let centered = &x - &mean;
    let total_variance = centered.iter().map(|v| v * v).sum::<f64>() / n as f64;

    let (values, mut axes) = spectrum(&centered);
    let max_k = d.min(n - 1);
    let k = match target {
        PcaTarget::Components(k) => {
            if k > max_k {
                return Err(Error::invalid(format!(
                    "requested {k} components but at most min(n-1, d) = {max_k} are available"
                )));
            }
            k
        }
        PcaTarget::VarianceFraction(f) => {
            let mut cumulative = 0.0;
            let mut k = max_k;
            for (i, v) in values.iter().take(max_k).enumerate() {
                cumulative += v;
                if total_variance == 0.0 || cumulative / total_variance >= f - 1e-12 {
                    k = i + 1;
                    break;
                }
            }
            k
        }
    };
    apply_sign_convention(&mut axes);
    Ok(PcaModel {
        mean,
        components: axes.slice(ndarray::s![..k, ..]).to_owned(),
        explained_variance: Array1::from(values[..k].to_vec()),
        total_variance,
        fitted_on,
    })
}

pub fn project(x: ArrayView2<f64>, model: &PcaModel) -> Result<Array2<f64>> {
    if x.ncols() != model.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.input_dim(),
            actual: x.ncols(),
        });
    }
    Ok((&x - &model.mean).dot(&model.components.t()))
}

/// [`project`] guarded by the fitted-on partition.
pub fn project_checked(x: ArrayView2<f64>, model: &PcaModel, required: &PartitionId) -> Result<Array2<f64>> {
    if &model.fitted_on != required {
        return Err(Error::Leakage {
            expected: required.to_string(),
            found: model.fitted_on.to_string(),
        });
    }
    project(x, model)
}

pub fn reconstruct(z: ArrayView2<f64>, model: &PcaModel) -> Result<Array2<f64>> {
    if z.ncols() != model.n_components() {
        return Err(Error::DimensionMismatch {
            expected: model.n_components(),
            actual: z.ncols(),
        });
    }
    Ok(z.dot(&model.components) + &model.mean)
}
