use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CnnModel, Tensor4};
use crate::error::{Error, Result};
use crate::ingest::GaitLabel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Set by the pipeline from the global seed.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 32,
            epochs: 30,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("CNN learning_rate must be non-negative"));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::invalid("CNN batch_size and epochs must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.epsilon > 0.0) {
            return Err(Error::invalid(
                "Adam betas must lie in [0, 1) and epsilon must be positive",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: CnnModel,
    /// Mean training loss of each epoch.
    pub loss_history: Vec<f64>,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn step(&mut self, params: &mut [f64], grads: &[f64], cfg: &TrainConfig) {
        self.t += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.t);
        let bc2 = 1.0 - cfg.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * g;
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    }
}

/// Adam over seeded-shuffle mini-batches of cross-entropy loss.
pub fn train(
    mut model: CnnModel,
    inputs: &Tensor4,
    labels: &[GaitLabel],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if labels.len() != inputs.batch() {
        return Err(Error::DimensionMismatch {
            expected: inputs.batch(),
            actual: labels.len(),
        });
    }
    for class in GaitLabel::ALL {
        if labels.iter().filter(|&&l| l == class).count() < 2 {
            return Err(Error::invalid(format!(
                "CNN training needs at least 2 samples of class {class}"
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = model.params();
    let mut adam = Adam {
        m: vec![0.0; params.len()],
        v: vec![0.0; params.len()],
        t: 0,
    };
    let mut order: Vec<usize> = (0..labels.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (batch_idx, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch = inputs.select(chunk);
            let batch_labels: Vec<GaitLabel> = chunk.iter().map(|&i| labels[i]).collect();
            let (loss, grads) = model.loss_and_gradient(&batch, &batch_labels)?;
            if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: batch_idx,
                });
            }
            epoch_loss += loss * chunk.len() as f64;
            adam.step(&mut params, &grads, config);
            model.set_params(&params);
        }
        history.push(epoch_loss / labels.len() as f64);
    }
    Ok(TrainOutcome {
        model,
        loss_history: history,
    })
}

pub fn write_loss_history_csv<W: Write>(history: &[f64], mut out: W) -> Result<()> {
    writeln!(out, "epoch,loss")?;
    for (epoch, loss) in history.iter().enumerate() {
        writeln!(out, "{},{}", epoch + 1, loss)?;
    }
    Ok(())
}
