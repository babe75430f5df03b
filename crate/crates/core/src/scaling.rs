//! Per-feature standard and robust scaling.
//!
//! Parameters remember the partition they were fitted on; [`transform_checked`]
//! is the entry point the evaluation harness uses to enforce train-only fitting.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::impute::median_of;
use crate::PartitionId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalerKind {
    /// Mean and population standard deviation.
    #[default]
    Standard,
    /// Median and interquartile range.
    Robust,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub kind: ScalerKind,
    pub center: Array1<f64>,
    pub scale: Array1<f64>,
    pub fitted_on: PartitionId,
}

impl ScalerParams {
    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// Indices of features whose fitted scale is zero; they pass through centered.
    pub fn zero_scale_features(&self) -> Vec<usize> {
        self.scale
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == 0.0)
            .map(|(i, _)| i)
            .collect()
    }

    fn effective_scale(&self) -> Array1<f64> {
        self.scale.mapv(|s| if s == 0.0 { 1.0 } else { s })
    }
}

/// Linear-interpolation quantile at rank `q (n - 1)` of sorted data.
pub(crate) fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let rank = q * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

pub fn fit_scaler(kind: ScalerKind, x: ArrayView2<f64>, fitted_on: PartitionId) -> Result<ScalerParams> {
    let (n, d) = x.dim();
    if n == 0 || d == 0 {
        return Err(Error::invalid("cannot fit a scaler on an empty matrix"));
    }
    let (center, scale) = match kind {
        ScalerKind::Standard => {
            let mean = x.mean_axis(Axis(0)).expect("n > 0");
            let std = x.std_axis(Axis(0), 0.0);
            (mean, std)
        }
        ScalerKind::Robust => {
            let mut center = Array1::zeros(d);
            let mut scale = Array1::zeros(d);
            let mut col = Vec::with_capacity(n);
            for (j, column) in x.axis_iter(Axis(1)).enumerate() {
                col.clear();
                col.extend(column.iter().copied());
                center[j] = median_of(&mut col).expect("n > 0");
                // median_of sorted the column in place
                scale[j] = quantile_sorted(&col, 0.75) - quantile_sorted(&col, 0.25);
            }
            (center, scale)
        }
    };
    Ok(ScalerParams {
        kind,
        center,
        scale,
        fitted_on,
    })
}

fn check_dim(x: &ArrayView2<f64>, params: &ScalerParams) -> Result<()> {
    if x.ncols() != params.dim() {
        return Err(Error::DimensionMismatch {
            expected: params.dim(),
            actual: x.ncols(),
        });
    }
    Ok(())
}

pub fn transform(x: ArrayView2<f64>, params: &ScalerParams) -> Result<Array2<f64>> {
    check_dim(&x, params)?;
    let scale = params.effective_scale();
    Ok((&x - &params.center) / &scale)
}

pub fn inverse_transform(x: ArrayView2<f64>, params: &ScalerParams) -> Result<Array2<f64>> {
    check_dim(&x, params)?;
    let scale = params.effective_scale();
    Ok(&x * &scale + &params.center)
}

/// Transforms only if `params` were fitted on `required`.
pub fn transform_checked(x: ArrayView2<f64>, params: &ScalerParams, required: &PartitionId) -> Result<Array2<f64>> {
    if &params.fitted_on != required {
        return Err(Error::Leakage {
            expected: required.to_string(),
            found: params.fitted_on.to_string(),
        });
    }
    transform(x, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tag() -> PartitionId {
        PartitionId::new("fold-0/train")
    }

    #[test]
    fn standard_population_std() {
        let p = fit_scaler(ScalerKind::Standard, array![[1.0], [2.0], [3.0]].view(), tag()).unwrap();
        assert!((p.center[0] - 2.0).abs() < 1e-15);
        assert!((p.scale[0] - (2.0f64 / 3.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn robust_interpolated_iqr() {
        let x = array![[0.0], [1.0], [2.0], [3.0], [4.0]];
        let p = fit_scaler(ScalerKind::Robust, x.view(), tag()).unwrap();
        assert_eq!(p.center[0], 2.0);
        assert_eq!(p.scale[0], 2.0);
    }

    #[test]
    fn constant_column_flagged_and_centered() {
        let x = array![[5.0, 1.0], [5.0, 2.0], [5.0, 3.0]];
        let p = fit_scaler(ScalerKind::Standard, x.view(), tag()).unwrap();
        assert_eq!(p.scale[0], 0.0);
        assert_eq!(p.zero_scale_features(), vec![0]);
        let t = transform(x.view(), &p).unwrap();
        assert!(t.column(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn transform_arithmetic() {
        let p = ScalerParams {
            kind: ScalerKind::Standard,
            center: array![2.0],
            scale: array![0.816497],
            fitted_on: tag(),
        };
        let t = transform(array![[1.0], [2.0], [3.0]].view(), &p).unwrap();
        for (got, want) in t.iter().zip([-1.224745, 0.0, 1.224745]) {
            assert!((got - want).abs() < 1e-6);
        }
    }

    #[test]
    fn fitted_data_standardized_and_invertible() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Array2::from_shape_fn((40, 7), |(_, j)| rng.random_range(-3.0..3.0) * (j + 1) as f64);
        for kind in [ScalerKind::Standard, ScalerKind::Robust] {
            let p = fit_scaler(kind, x.view(), tag()).unwrap();
            let t = transform(x.view(), &p).unwrap();
            if kind == ScalerKind::Standard {
                for col in t.axis_iter(Axis(1)) {
                    assert!(col.mean().unwrap().abs() < 1e-9);
                    assert!((col.std(0.0) - 1.0).abs() < 1e-9);
                }
            }
            let back = inverse_transform(t.view(), &p).unwrap();
            assert!((&back - &x).iter().all(|e| e.abs() < 1e-9));
        }
    }

    #[test]
    fn dimension_mismatch_and_leakage() {
        let p = fit_scaler(ScalerKind::Standard, array![[1.0, 2.0], [3.0, 4.0]].view(), tag()).unwrap();
        assert!(matches!(
            transform(array![[1.0]].view(), &p),
            Err(Error::DimensionMismatch { expected: 2, actual: 1 })
        ));
        let test_fitted = fit_scaler(
            ScalerKind::Standard,
            array![[1.0, 2.0], [3.0, 4.0]].view(),
            PartitionId::test_fold(0),
        )
        .unwrap();
        assert!(matches!(
            transform_checked(array![[1.0, 2.0]].view(), &test_fitted, &PartitionId::train_fold(0)),
            Err(Error::Leakage { .. })
        ));
        assert!(transform_checked(array![[1.0, 2.0]].view(), &p, &tag()).is_ok());
    }

    #[test]
    fn empty_matrix_rejected() {
        assert!(fit_scaler(ScalerKind::Robust, Array2::<f64>::zeros((0, 3)).view(), tag()).is_err());
    }
}
