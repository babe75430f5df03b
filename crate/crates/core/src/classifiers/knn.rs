use std::cmp::Ordering;

use ndarray::{Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_matrix, Classifier};
use crate::error::{Error, Result};
use crate::ingest::GaitLabel;

/// Brute-force Euclidean k-nearest-neighbour classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub train_x: Array2<f64>,
    pub train_y: Vec<GaitLabel>,
}

pub fn knn_fit(x: ArrayView2<f64>, y: &[GaitLabel], k: usize) -> Result<KnnModel> {
    check_matrix(x, y)?;
    if k == 0 || k.is_multiple_of(2) {
        return Err(Error::invalid(format!("kNN k must be odd and positive, got {k}")));
    }
    if k > x.nrows() {
        return Err(Error::invalid(format!(
            "kNN k = {k} exceeds the {} training rows",
            x.nrows()
        )));
    }
    Ok(KnnModel {
        k,
        train_x: x.to_owned(),
        train_y: y.to_vec(),
    })
}

fn squared_distance(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

impl KnnModel {
    fn vote(&self, query: ArrayView1<f64>) -> GaitLabel {
        let mut dist: Vec<(f64, usize)> = self
            .train_x
            .rows()
            .into_iter()
            .enumerate()
            .map(|(i, row)| (squared_distance(row, query), i))
            .collect();
        // ties at the k-boundary go to the lower training index
        let by_dist_then_index = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if self.k < dist.len() {
            dist.select_nth_unstable_by(self.k - 1, by_dist_then_index);
        }
        let abnormal = dist[..self.k]
            .iter()
            .filter(|&&(_, i)| self.train_y[i] == GaitLabel::Abnormal)
            .count();
        match (2 * abnormal).cmp(&self.k) {
            Ordering::Greater => GaitLabel::Abnormal,
            _ => GaitLabel::Normal,
        }
    }
}

impl Classifier for KnnModel {
    fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<GaitLabel>> {
        if x.ncols() != self.train_x.ncols() {
            return Err(Error::DimensionMismatch {
                expected: self.train_x.ncols(),
                actual: x.ncols(),
            });
        }
        let rows: Vec<_> = x.rows().into_iter().collect();
        Ok(rows.into_par_iter().map(|q| self.vote(q)).collect())
    }
}
