//! Small 2-D convolutional network over `(time, channel, 1)` windows with
//! native forward and backward passes in double precision.
//!
//! Default architecture for 200 x 6 x 1 windows:
//!
//! ```text
//! conv 16 @ 5x3 -> relu -> maxpool 2x2 -> conv 32 @ 5x2 -> relu -> maxpool 2x1
//!   -> flatten -> dense 64 -> relu -> dense 2 -> softmax
//! (200,6,1) -> (196,4,16) -> (98,2,16) -> (94,1,32) -> (47,1,32) -> 1504 -> 64 -> 2
//! ```
//!
//! The second pool is 2x1 because the width is already 1 at that point.

pub mod layers;
mod train;

pub use layers::{Cache, Layer, Shape3};
pub use train::{train, write_loss_history_csv, TrainConfig, TrainOutcome};

use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{GaitLabel, CHANNELS};
use crate::windowing::Window;

/// Dense `(batch, height, width, channels)` tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    shape: [usize; 4],
    data: Vec<f64>,
}

impl Tensor4 {
    pub fn new(shape: [usize; 4], data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(Error::ShapeMismatch {
                expected: format!("{expected} values for shape {shape:?}"),
                actual: format!("{} values", data.len()),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("tensor contains non-finite values"));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: [usize; 4]) -> Self {
        Self {
            shape,
            data: vec![0.0; shape.iter().product()],
        }
    }

    /// Rows of `x` become samples of shape `(height, width, channels)`.
    pub fn from_rows(x: ArrayView2<f64>, height: usize, width: usize, channels: usize) -> Result<Self> {
        if x.ncols() != height * width * channels {
            return Err(Error::ShapeMismatch {
                expected: format!("rows of length {}", height * width * channels),
                actual: format!("rows of length {}", x.ncols()),
            });
        }
        Self::new([x.nrows(), height, width, channels], x.iter().copied().collect())
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    pub fn sample_shape(&self) -> Shape3 {
        Shape3::new(self.shape[1], self.shape[2], self.shape[3])
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        let n = self.sample_shape().len();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn get(&self, n: usize, y: usize, x: usize, c: usize) -> f64 {
        let [_, h, w, ch] = self.shape;
        self.data[((n * h + y) * w + x) * ch + c]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Gathers the given samples into a new batch.
    pub fn select(&self, indices: &[usize]) -> Tensor4 {
        let mut data = Vec::with_capacity(indices.len() * self.sample_shape().len());
        for &i in indices {
            data.extend_from_slice(self.sample(i));
        }
        Tensor4 {
            shape: [indices.len(), self.shape[1], self.shape[2], self.shape[3]],
            data,
        }
    }
}

/// Inverse of the row-major window flattening: `flat[k]` lands at
/// `[k / 6][k % 6][0]`.
pub fn reshape_for_cnn(flat: &[f64], window_len: usize) -> Result<Tensor4> {
    let expected = window_len * CHANNELS;
    if flat.len() != expected {
        return Err(Error::ShapeMismatch {
            expected: format!("flattened window of length {expected}"),
            actual: format!("length {}", flat.len()),
        });
    }
    Tensor4::new([1, window_len, CHANNELS, 1], flat.to_vec())
}

pub fn window_to_tensor(w: &Window) -> Result<Tensor4> {
    reshape_for_cnn(w.values.as_slice().expect("windows are contiguous"), w.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerSpec {
    Conv { filters: usize, kernel: [usize; 2] },
    Relu,
    MaxPool { pool: [usize; 2] },
    Flatten,
    Dense { units: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CnnArchitecture {
    /// `[height, width, channels]` of one input sample.
    pub input: [usize; 3],
    pub layers: Vec<LayerSpec>,
}

impl CnnArchitecture {
    pub fn for_window(window_len: usize) -> Self {
        use LayerSpec::*;
        Self {
            input: [window_len, CHANNELS, 1],
            layers: vec![
                Conv {
                    filters: 16,
                    kernel: [5, 3],
                },
                Relu,
                MaxPool { pool: [2, 2] },
                Conv {
                    filters: 32,
                    kernel: [5, 2],
                },
                Relu,
                MaxPool { pool: [2, 1] },
                Flatten,
                Dense { units: 64 },
                Relu,
                Dense { units: 2 },
            ],
        }
    }

    pub fn input_shape(&self) -> Shape3 {
        Shape3::new(self.input[0], self.input[1], self.input[2])
    }
}

impl Default for CnnArchitecture {
    fn default() -> Self {
        Self::for_window(200)
    }
}

/// Network parameters plus the activation shape entering each layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnModel {
    pub architecture: CnnArchitecture,
    pub layers: Vec<Layer>,
    pub shapes: Vec<Shape3>,
}

/// Per-sample forward record used by backpropagation.
struct Trace {
    caches: Vec<Cache>,
    probs: [f64; 2],
}

pub(crate) fn softmax2(logits: &[f64]) -> [f64; 2] {
    let m = logits[0].max(logits[1]);
    let e0 = (logits[0] - m).exp();
    let e1 = (logits[1] - m).exp();
    let s = e0 + e1;
    [e0 / s, e1 / s]
}

impl CnnModel {
    /// Builds the network with Glorot-uniform weights and zero biases.
    pub fn new(architecture: CnnArchitecture, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut shape = architecture.input_shape();
        if shape.is_empty() {
            return Err(Error::invalid("CNN input shape must be nonzero"));
        }
        let mut layers = Vec::with_capacity(architecture.layers.len());
        let mut shapes = Vec::with_capacity(architecture.layers.len());
        for spec in &architecture.layers {
            let layer = match *spec {
                LayerSpec::Conv { filters, kernel } => Layer::conv(&mut rng, shape.c, filters, kernel[0], kernel[1]),
                LayerSpec::Relu => Layer::Relu,
                LayerSpec::MaxPool { pool } => Layer::MaxPool {
                    pool_h: pool[0],
                    pool_w: pool[1],
                },
                LayerSpec::Flatten => Layer::Flatten,
                LayerSpec::Dense { units } => Layer::dense(&mut rng, shape.len(), units),
            };
            let next = layer.output_shape(shape).map_err(Error::InvalidArgument)?;
            shapes.push(shape);
            layers.push(layer);
            shape = next;
        }
        if shape.len() != 2 {
            return Err(Error::invalid(format!(
                "CNN must end with 2 outputs, architecture produces {shape}"
            )));
        }
        Ok(Self {
            architecture,
            layers,
            shapes,
        })
    }

    /// Assembles a model from explicit layers (used for hand-built nets).
    pub fn from_layers(input: Shape3, layers: Vec<Layer>) -> Result<Self> {
        let mut shape = input;
        let mut shapes = Vec::with_capacity(layers.len());
        for layer in &layers {
            shapes.push(shape);
            shape = layer.output_shape(shape).map_err(Error::InvalidArgument)?;
        }
        if shape.len() != 2 {
            return Err(Error::invalid("CNN must end with 2 outputs"));
        }
        Ok(Self {
            architecture: CnnArchitecture {
                input: [input.h, input.w, input.c],
                layers: Vec::new(),
            },
            layers,
            shapes,
        })
    }

    pub fn input_shape(&self) -> Shape3 {
        self.shapes[0]
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// All parameters, layer by layer (weights then bias).
    pub fn params(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.params().copied()).collect()
    }

    pub fn set_params(&mut self, values: &[f64]) {
        assert_eq!(values.len(), self.param_count(), "parameter vector length");
        let mut it = values.iter();
        for layer in &mut self.layers {
            for p in layer.params_mut() {
                *p = *it.next().expect("length checked");
            }
        }
    }

    fn check_batch(&self, batch: &Tensor4) -> Result<()> {
        if batch.sample_shape() != self.input_shape() {
            let s = self.input_shape();
            return Err(Error::ShapeMismatch {
                expected: format!("(n, {}, {}, {})", s.h, s.w, s.c),
                actual: format!("{:?}", batch.shape()),
            });
        }
        Ok(())
    }

    fn trace(&self, sample: &[f64]) -> Trace {
        let mut act = sample.to_vec();
        let mut caches = Vec::with_capacity(self.layers.len());
        for (layer, &shape) in self.layers.iter().zip(&self.shapes) {
            let (out, cache) = layer.forward(&act, shape);
            caches.push(cache);
            act = out;
        }
        Trace {
            caches,
            probs: softmax2(&act),
        }
    }

    /// Class probabilities `[P(normal), P(abnormal)]`, one row per sample.
    pub fn forward(&self, batch: &Tensor4) -> Result<Array2<f64>> {
        self.check_batch(batch)?;
        let probs: Vec<[f64; 2]> = (0..batch.batch())
            .into_par_iter()
            .map(|i| self.trace(batch.sample(i)).probs)
            .collect();
        Ok(Array2::from_shape_fn((probs.len(), 2), |(i, c)| probs[i][c]))
    }

    fn sample_gradient(&self, sample: &[f64], label: usize, scale: f64) -> (Vec<f64>, f64) {
        let trace = self.trace(sample);
        let loss = -trace.probs[label].max(f64::MIN_POSITIVE).ln();
        let mut grad = vec![trace.probs[0] * scale, trace.probs[1] * scale];
        grad[label] -= scale;

        let mut grads = vec![0.0; self.param_count()];
        let mut offset = self.param_count();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            offset -= layer.param_count();
            let slot = &mut grads[offset..offset + layer.param_count()];
            grad = layer.backward(&grad, &trace.caches[i], self.shapes[i], slot);
        }
        (grads, loss)
    }

    /// Mean cross-entropy loss and its gradient for every parameter, in
    /// [`CnnModel::params`] order.
    pub fn loss_and_gradient(&self, batch: &Tensor4, labels: &[GaitLabel]) -> Result<(f64, Vec<f64>)> {
        self.check_batch(batch)?;
        if labels.len() != batch.batch() || labels.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: batch.batch(),
                actual: labels.len(),
            });
        }
        let scale = 1.0 / labels.len() as f64;
        // per-sample results are summed in index order so the total is reproducible
        let per_sample: Vec<(Vec<f64>, f64)> = (0..labels.len())
            .into_par_iter()
            .map(|i| self.sample_gradient(batch.sample(i), labels[i].encode() as usize, scale))
            .collect();
        let mut total = vec![0.0; self.param_count()];
        let mut loss = 0.0;
        for (g, l) in per_sample {
            for (t, v) in total.iter_mut().zip(g) {
                *t += v;
            }
            loss += l;
        }
        Ok((loss * scale, total))
    }

    pub fn backward(&self, batch: &Tensor4, labels: &[GaitLabel]) -> Result<Vec<f64>> {
        Ok(self.loss_and_gradient(batch, labels)?.1)
    }

    pub fn loss(&self, batch: &Tensor4, labels: &[GaitLabel]) -> Result<f64> {
        let probs = self.forward(batch)?;
        if labels.len() != batch.batch() {
            return Err(Error::DimensionMismatch {
                expected: batch.batch(),
                actual: labels.len(),
            });
        }
        let total: f64 = labels
            .iter()
            .enumerate()
            .map(|(i, l)| -probs[[i, l.encode() as usize]].max(f64::MIN_POSITIVE).ln())
            .sum();
        Ok(total / labels.len() as f64)
    }

    pub fn predict_batch(&self, batch: &Tensor4) -> Result<Vec<GaitLabel>> {
        Ok(self
            .forward(batch)?
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

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_architecture_shapes() {
        let m = CnnModel::new(CnnArchitecture::default(), 0).unwrap();
        let shapes: Vec<Shape3> = m.shapes.clone();
        assert_eq!(shapes[0], Shape3::new(200, 6, 1));
        assert_eq!(shapes[3], Shape3::new(98, 2, 16));
        assert_eq!(shapes[6], Shape3::new(47, 1, 32));
        assert_eq!(shapes[7], Shape3::new(1, 1, 1504));
        assert_eq!(m.param_count(), 256 + 5152 + 96320 + 130);
    }

    #[test]
    fn zero_params_give_even_probabilities() {
        let mut m = CnnModel::new(CnnArchitecture::default(), 1).unwrap();
        m.set_params(&vec![0.0; m.param_count()]);
        let batch = Tensor4::new([3, 200, 6, 1], (0..3600).map(|v| (v as f64).sin()).collect()).unwrap();
        let p = m.forward(&batch).unwrap();
        assert_eq!(p.dim(), (3, 2));
        assert!(p.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn single_sample_output_shape() {
        let m = CnnModel::new(CnnArchitecture::default(), 2).unwrap();
        let p = m.forward(&Tensor4::zeros([1, 200, 6, 1])).unwrap();
        assert_eq!(p.dim(), (1, 2));
        assert!((p.row(0).sum() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn wrong_input_shape_named() {
        let m = CnnModel::new(CnnArchitecture::default(), 2).unwrap();
        let err = m.forward(&Tensor4::zeros([1, 100, 6, 1])).unwrap_err();
        assert!(err.to_string().contains("(n, 200, 6, 1)"), "{err}");
    }

    #[test]
    fn reshape_index_identity() {
        let flat: Vec<f64> = (0..1200).map(|v| v as f64).collect();
        let t = reshape_for_cnn(&flat, 200).unwrap();
        assert_eq!(t.shape(), [1, 200, 6, 1]);
        for (k, &v) in flat.iter().enumerate() {
            assert_eq!(t.get(0, k / 6, k % 6, 0), v);
        }
        assert!(reshape_for_cnn(&flat[..1199], 200).is_err());
    }

    #[test]
    fn bad_architecture_rejected() {
        let arch = CnnArchitecture {
            input: [10, 6, 1],
            layers: vec![LayerSpec::Flatten, LayerSpec::Dense { units: 3 }],
        };
        assert!(CnnModel::new(arch, 0).is_err());
        let arch = CnnArchitecture {
            input: [4, 6, 1],
            layers: vec![LayerSpec::Conv {
                filters: 2,
                kernel: [5, 1],
            }],
        };
        assert!(CnnModel::new(arch, 0).is_err());
    }
}
