use ndarray::{Array1, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::{check_matrix, targets, Classifier};
use crate::error::{Error, Result};
use crate::ingest::GaitLabel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogRegConfig {
    pub learning_rate: f64,
    pub l2_lambda: f64,
    pub max_epochs: usize,
    pub tolerance: f64,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            l2_lambda: 1e-4,
            max_epochs: 5000,
            tolerance: 1e-6,
        }
    }
}

impl LogRegConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("logistic regression learning_rate must be non-negative"));
        }
        if !(self.l2_lambda >= 0.0) {
            return Err(Error::invalid("logistic regression l2_lambda must be non-negative"));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::invalid("logistic regression tolerance must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegModel {
    pub weights: Array1<f64>,
    pub bias: f64,
    pub config: LogRegConfig,
    pub epochs_run: usize,
    pub converged: bool,
    pub loss_history: Vec<f64>,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Mean negative log-likelihood plus `lambda/2 |w|^2` (bias unpenalised).
pub fn loss(x: ArrayView2<f64>, y: &[f64], w: ArrayView1<f64>, b: f64, lambda: f64) -> f64 {
    let z = x.dot(&w) + b;
    let nll: f64 = z.iter().zip(y).map(|(&z, &t)| softplus(z) - t * z).sum();
    nll / y.len() as f64 + 0.5 * lambda * w.dot(&w)
}

/// Loss together with its gradient with respect to the weights and the bias.
pub fn loss_and_gradient(
    x: ArrayView2<f64>,
    y: &[f64],
    w: ArrayView1<f64>,
    b: f64,
    lambda: f64,
) -> (f64, Array1<f64>, f64) {
    let n = y.len() as f64;
    let z = x.dot(&w) + b;
    let mut nll = 0.0;
    let residual: Array1<f64> = z
        .iter()
        .zip(y)
        .map(|(&z, &t)| {
            nll += softplus(z) - t * z;
            sigmoid(z) - t
        })
        .collect();
    let grad_w = x.t().dot(&residual) / n + &w * lambda;
    let grad_b = residual.sum() / n;
    (nll / n + 0.5 * lambda * w.dot(&w), grad_w, grad_b)
}

/// Full-batch gradient descent. The step halves whenever it would raise the
/// loss, so the recorded loss history is non-increasing.
pub fn logreg_fit(x: ArrayView2<f64>, y: &[GaitLabel], config: &LogRegConfig) -> Result<LogRegModel> {
    config.validate()?;
    check_matrix(x, y)?;
    let t = targets(y);
    let lambda = config.l2_lambda;
    let mut w = Array1::zeros(x.ncols());
    let mut b = 0.0;
    let mut lr = config.learning_rate;
    let mut history = Vec::new();
    let mut converged = false;
    let mut epochs = 0;

    let (mut current, mut gw, mut gb) = loss_and_gradient(x, &t, w.view(), b, lambda);
    if !current.is_finite() {
        return Err(Error::Diverged { epoch: 0 });
    }
    history.push(current);
    while epochs < config.max_epochs {
        let grad_inf = gw.iter().fold(gb.abs(), |m, g| m.max(g.abs()));
        if grad_inf < config.tolerance {
            converged = true;
            break;
        }
        epochs += 1;
        loop {
            let w_next = &w - &(&gw * lr);
            let b_next = b - lr * gb;
            let candidate = loss(x, &t, w_next.view(), b_next, lambda);
            if candidate.is_finite() && candidate <= current {
                w = w_next;
                b = b_next;
                break;
            }
            lr *= 0.5;
            if lr < 1e-300 {
                if !candidate.is_finite() {
                    return Err(Error::Diverged { epoch: epochs });
                }
                // no descent possible at machine precision
                converged = true;
                break;
            }
        }
        if converged {
            break;
        }
        let next = loss_and_gradient(x, &t, w.view(), b, lambda);
        if !next.0.is_finite() {
            return Err(Error::Diverged { epoch: epochs });
        }
        (current, gw, gb) = next;
        history.push(current);
    }
    Ok(LogRegModel {
        weights: w,
        bias: b,
        config: *config,
        epochs_run: epochs,
        converged,
        loss_history: history,
    })
}

impl LogRegModel {
    /// Probability of the abnormal class for each row.
    pub fn predict_proba(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        if x.ncols() != self.weights.len() {
            return Err(Error::DimensionMismatch {
                expected: self.weights.len(),
                actual: x.ncols(),
            });
        }
        Ok((x.dot(&self.weights) + self.bias).mapv(sigmoid))
    }
}

impl Classifier for LogRegModel {
    fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<GaitLabel>> {
        Ok(self
            .predict_proba(x)?
            .iter()
            .map(|&p| {
                if p >= 0.5 {
                    GaitLabel::Abnormal
                } else {
                    GaitLabel::Normal
                }
            })
            .collect())
    }
}
