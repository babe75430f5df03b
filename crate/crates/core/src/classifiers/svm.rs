//! Soft-margin SVM trained by simplified sequential minimal optimisation.
//!
//! Labels map to `-1` (normal) and `+1` (abnormal). Each sweep visits the
//! training points in a seeded random order; a point that violates the KKT
//! conditions by more than `tol` is paired with the most violating point on
//! the opposite side of the bias interval, which guarantees a productive step.
//! The bias is the midpoint of that interval. Training stops after
//! `max_passes` consecutive sweeps with no violations.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_matrix, Classifier};
use crate::error::{Error, Result};
use crate::ingest::GaitLabel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum Kernel {
    Linear,
    Rbf { gamma: f64 },
}

impl Kernel {
    pub fn eval(&self, a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
        match *self {
            Kernel::Linear => a.dot(&b),
            Kernel::Rbf { gamma } => {
                let d2: f64 = a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum();
                (-gamma * d2).exp()
            }
        }
    }
}

/// Kernel choice in configuration; an RBF gamma of `None` means
/// `1 / (d * mean feature variance)` computed on the training data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type", deny_unknown_fields)]
pub enum KernelSpec {
    Linear,
    Rbf {
        #[serde(default)]
        gamma: Option<f64>,
    },
}

impl KernelSpec {
    pub fn resolve(&self, x: ArrayView2<f64>) -> Kernel {
        match *self {
            KernelSpec::Linear => Kernel::Linear,
            KernelSpec::Rbf { gamma: Some(gamma) } => Kernel::Rbf { gamma },
            KernelSpec::Rbf { gamma: None } => {
                let d = x.ncols() as f64;
                let mean_var = x.axis_iter(Axis(1)).map(|c| c.var(0.0)).sum::<f64>() / d;
                let gamma = if mean_var > 0.0 { 1.0 / (d * mean_var) } else { 1.0 };
                Kernel::Rbf { gamma }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmConfig {
    pub kernel: KernelSpec,
    pub c: f64,
    pub tol: f64,
    pub max_passes: usize,
    pub max_sweeps: usize,
    /// Set by the pipeline from the global seed.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            kernel: KernelSpec::Rbf { gamma: None },
            c: 1.0,
            tol: 1e-3,
            max_passes: 10,
            max_sweeps: 100_000,
            seed: 0,
        }
    }
}

impl SvmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::invalid("SVM C must be positive"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::invalid("SVM tol must be positive"));
        }
        if self.max_passes == 0 || self.max_sweeps == 0 {
            return Err(Error::invalid("SVM max_passes and max_sweeps must be positive"));
        }
        if let KernelSpec::Rbf { gamma: Some(g) } = self.kernel {
            if !(g > 0.0) {
                return Err(Error::invalid("RBF gamma must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub kernel: Kernel,
    pub c: f64,
    pub tol: f64,
    pub support_vectors: Array2<f64>,
    /// Training-row index of each support vector.
    pub support_indices: Vec<usize>,
    /// Dual variables of the support vectors, all in `(0, C]`.
    pub alphas: Vec<f64>,
    /// `+1` or `-1` per support vector.
    pub sv_signs: Vec<f64>,
    pub bias: f64,
    pub sweeps: usize,
}

struct Smo<'a> {
    k: Array2<f64>,
    y: &'a [f64],
    alpha: Vec<f64>,
    /// `sum_j alpha_j y_j K(j, t) - y_t`: the prediction error without the bias.
    f: Vec<f64>,
    c: f64,
}

const STEP_EPS: f64 = 1e-12;

/// Extreme errors of the two KKT index sets. At the optimum `low <= up`,
/// and any `-b` in `[low, up]` satisfies every KKT condition.
struct Extremes {
    up: f64,
    i_up: usize,
    low: f64,
    i_low: usize,
}

impl Extremes {
    fn gap(&self) -> f64 {
        self.low - self.up
    }

    fn bias(&self) -> f64 {
        match (self.up.is_finite(), self.low.is_finite()) {
            (true, true) => -0.5 * (self.up + self.low),
            (true, false) => -self.up,
            (false, true) => -self.low,
            (false, false) => 0.0,
        }
    }
}

impl Smo<'_> {
    fn refresh(&mut self) {
        let n = self.y.len();
        for t in 0..n {
            let mut g = 0.0;
            for j in 0..n {
                if self.alpha[j] != 0.0 {
                    g += self.alpha[j] * self.y[j] * self.k[[j, t]];
                }
            }
            self.f[t] = g - self.y[t];
        }
    }

    /// Points whose error bounds `-b` from above.
    fn in_up(&self, t: usize) -> bool {
        (self.y[t] > 0.0 && self.alpha[t] < self.c) || (self.y[t] < 0.0 && self.alpha[t] > 0.0)
    }

    /// Points whose error bounds `-b` from below.
    fn in_low(&self, t: usize) -> bool {
        (self.y[t] > 0.0 && self.alpha[t] > 0.0) || (self.y[t] < 0.0 && self.alpha[t] < self.c)
    }

    fn extremes(&self) -> Extremes {
        let mut e = Extremes {
            up: f64::INFINITY,
            i_up: 0,
            low: f64::NEG_INFINITY,
            i_low: 0,
        };
        for t in 0..self.y.len() {
            if self.in_up(t) && self.f[t] < e.up {
                e.up = self.f[t];
                e.i_up = t;
            }
            if self.in_low(t) && self.f[t] > e.low {
                e.low = self.f[t];
                e.i_low = t;
            }
        }
        e
    }

    fn take_step(&mut self, i: usize, j: usize) -> bool {
        if i == j {
            return false;
        }
        let (yi, yj) = (self.y[i], self.y[j]);
        let (ai, aj) = (self.alpha[i], self.alpha[j]);
        let (lo, hi) = if yi != yj {
            ((aj - ai).max(0.0), (self.c + aj - ai).min(self.c))
        } else {
            ((ai + aj - self.c).max(0.0), (ai + aj).min(self.c))
        };
        if hi - lo < STEP_EPS {
            return false;
        }
        let (kii, kjj, kij) = (self.k[[i, i]], self.k[[j, j]], self.k[[i, j]]);
        // a flat direction (duplicate points) still moves, up to the box edge
        let eta = (2.0 * kij - kii - kjj).min(-STEP_EPS);
        let aj_new = (aj - yj * (self.f[i] - self.f[j]) / eta).clamp(lo, hi);
        if (aj_new - aj).abs() < STEP_EPS {
            return false;
        }
        let mut ai_new = ai + yi * yj * (aj - aj_new);
        // keep the box exact despite rounding
        if ai_new < STEP_EPS * self.c {
            ai_new = 0.0;
        } else if ai_new > self.c * (1.0 - STEP_EPS) {
            ai_new = self.c;
        }
        let (dai, daj) = (ai_new - ai, aj_new - aj);
        for t in 0..self.y.len() {
            self.f[t] += yi * dai * self.k[[i, t]] + yj * daj * self.k[[j, t]];
        }
        self.alpha[i] = ai_new;
        self.alpha[j] = aj_new;
        true
    }
}

pub fn svm_fit(x: ArrayView2<f64>, y: &[GaitLabel], config: &SvmConfig) -> Result<SvmModel> {
    config.validate()?;
    check_matrix(x, y)?;
    let signs: Vec<f64> = y
        .iter()
        .map(|l| if *l == GaitLabel::Abnormal { 1.0 } else { -1.0 })
        .collect();
    if signs.iter().all(|&s| s == signs[0]) {
        return Err(Error::SingleClass);
    }
    let n = x.nrows();
    let kernel = config.kernel.resolve(x);
    let k = Array2::from_shape_fn((n, n), |(i, j)| kernel.eval(x.row(i), x.row(j)));
    let mut smo = Smo {
        k,
        y: &signs,
        alpha: vec![0.0; n],
        f: signs.iter().map(|s| -s).collect(),
        c: config.c,
    };
    let two_tol = 2.0 * config.tol;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut passes = 0;
    let mut sweeps = 0;
    while passes < config.max_passes {
        if sweeps >= config.max_sweeps {
            let e = smo.extremes();
            if e.gap() <= two_tol {
                break;
            }
            return Err(Error::NoConvergence {
                iterations: sweeps,
                residual: 0.5 * e.gap(),
            });
        }
        sweeps += 1;
        smo.refresh();
        order.shuffle(&mut rng);
        for &t in &order {
            let e = smo.extremes();
            if e.gap() <= two_tol {
                break;
            }
            let partner = if smo.in_low(t) && smo.f[t] > e.up + two_tol {
                e.i_up
            } else if smo.in_up(t) && smo.f[t] < e.low - two_tol {
                e.i_low
            } else {
                continue;
            };
            smo.take_step(t, partner);
        }
        smo.refresh();
        if smo.extremes().gap() <= two_tol {
            passes += 1;
        } else {
            passes = 0;
        }
    }

    let bias = smo.extremes().bias();
    let support_indices: Vec<usize> = (0..n).filter(|&i| smo.alpha[i] > 0.0).collect();
    Ok(SvmModel {
        kernel,
        c: config.c,
        tol: config.tol,
        support_vectors: x.select(Axis(0), &support_indices),
        alphas: support_indices.iter().map(|&i| smo.alpha[i]).collect(),
        sv_signs: support_indices.iter().map(|&i| signs[i]).collect(),
        support_indices,
        bias,
        sweeps,
    })
}

impl SvmModel {
    pub fn decision_value(&self, q: ArrayView1<f64>) -> f64 {
        self.support_vectors
            .rows()
            .into_iter()
            .zip(self.alphas.iter().zip(&self.sv_signs))
            .map(|(sv, (a, s))| a * s * self.kernel.eval(sv, q))
            .sum::<f64>()
            + self.bias
    }

    pub fn decision_function(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        if x.ncols() != self.support_vectors.ncols() {
            return Err(Error::DimensionMismatch {
                expected: self.support_vectors.ncols(),
                actual: x.ncols(),
            });
        }
        Ok(x.rows().into_iter().map(|q| self.decision_value(q)).collect())
    }

    /// `sum a_i - 1/2 sum_ij a_i a_j y_i y_j K(x_i, x_j)`.
    pub fn dual_objective(&self) -> f64 {
        let m = self.alphas.len();
        let mut quad = 0.0;
        for i in 0..m {
            for j in 0..m {
                quad += self.alphas[i]
                    * self.alphas[j]
                    * self.sv_signs[i]
                    * self.sv_signs[j]
                    * self
                        .kernel
                        .eval(self.support_vectors.row(i), self.support_vectors.row(j));
            }
        }
        self.alphas.iter().sum::<f64>() - 0.5 * quad
    }

    /// Dual variable for every training row (zero for non-support vectors).
    pub fn full_alphas(&self, n_train: usize) -> Vec<f64> {
        let mut out = vec![0.0; n_train];
        for (&i, &a) in self.support_indices.iter().zip(&self.alphas) {
            out[i] = a;
        }
        out
    }
}

impl Classifier for SvmModel {
    fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<GaitLabel>> {
        Ok(self
            .decision_function(x)?
            .iter()
            .map(|&f| {
                if f >= 0.0 {
                    GaitLabel::Abnormal
                } else {
                    GaitLabel::Normal
                }
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use GaitLabel::{Abnormal, Normal};

    #[test]
    fn symmetric_hard_margin_pair() {
        let x = array![[-1.0], [1.0]];
        let cfg = SvmConfig {
            kernel: KernelSpec::Linear,
            c: 1e6,
            ..SvmConfig::default()
        };
        let m = svm_fit(x.view(), &[Normal, Abnormal], &cfg).unwrap();
        assert!(m.decision_value(array![-0.5].view()) < 0.0);
        assert!(m.decision_value(array![0.5].view()) > 0.0);
        assert!(m.bias.abs() < 1e-9);
    }

    #[test]
    fn rbf_support_vectors_signed_correctly() {
        let x = array![[0.0, 0.0], [0.3, 0.1], [3.0, 3.0], [3.2, 2.9], [0.1, 0.4], [2.8, 3.1]];
        let y = [Normal, Normal, Abnormal, Abnormal, Normal, Abnormal];
        let cfg = SvmConfig {
            kernel: KernelSpec::Rbf { gamma: Some(0.5) },
            c: 10.0,
            ..SvmConfig::default()
        };
        let m = svm_fit(x.view(), &y, &cfg).unwrap();
        for (sv, s) in m.support_vectors.rows().into_iter().zip(&m.sv_signs) {
            assert!(m.decision_value(sv) * s > 0.0);
        }
        assert_eq!(m.predict(x.view()).unwrap(), y.to_vec());
    }

    #[test]
    fn single_class_rejected() {
        let x = array![[0.0], [1.0]];
        assert!(matches!(
            svm_fit(x.view(), &[Abnormal, Abnormal], &SvmConfig::default()),
            Err(Error::SingleClass)
        ));
    }

    #[test]
    fn sweep_cap_reports_residual() {
        let x = array![[0.0], [0.1], [1.0], [1.1], [0.05], [1.05]];
        let y = [Normal, Abnormal, Abnormal, Normal, Abnormal, Normal];
        let cfg = SvmConfig {
            kernel: KernelSpec::Linear,
            max_sweeps: 1,
            ..SvmConfig::default()
        };
        match svm_fit(x.view(), &y, &cfg) {
            Err(Error::NoConvergence {
                iterations: 1,
                residual,
            }) => assert!(residual > 0.0),
            other => panic!("expected NoConvergence, got {other:?}"),
        }
    }

    #[test]
    fn auto_gamma_uses_mean_variance() {
        let x = array![[0.0, 0.0], [2.0, 4.0]];
        // column variances 1 and 4, mean 2.5, d = 2
        match (KernelSpec::Rbf { gamma: None }).resolve(x.view()) {
            Kernel::Rbf { gamma } => assert!((gamma - 0.2).abs() < 1e-15),
            k => panic!("{k:?}"),
        }
    }
}
