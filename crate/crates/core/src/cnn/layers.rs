//! Layer kernels operating on one sample at a time, stored as contiguous
//! `(height, width, channels)` row-major buffers.

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Spatial shape of one sample's activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape3 {
    pub h: usize,
    pub w: usize,
    pub c: usize,
}

impl Shape3 {
    pub fn new(h: usize, w: usize, c: usize) -> Self {
        Self { h, w, c }
    }

    pub fn len(&self) -> usize {
        self.h * self.w * self.c
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl std::fmt::Display for Shape3 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {}, {})", self.h, self.w, self.c)
    }
}

/// A layer with its learned parameters. Convolutions are valid (unpadded)
/// with stride 1; pooling uses non-overlapping windows and drops any remainder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Layer {
    Conv2d {
        in_channels: usize,
        filters: usize,
        kernel_h: usize,
        kernel_w: usize,
        /// `[filter][ky][kx][in_channel]`
        weights: Vec<f64>,
        bias: Vec<f64>,
    },
    Relu,
    MaxPool {
        pool_h: usize,
        pool_w: usize,
    },
    Flatten,
    Dense {
        inputs: usize,
        outputs: usize,
        /// `[output][input]`
        weights: Vec<f64>,
        bias: Vec<f64>,
    },
}

/// Per-sample values a layer needs for its backward pass.
#[derive(Debug, Clone)]
pub enum Cache {
    Input(Vec<f64>),
    Argmax(Vec<usize>),
    None,
}

fn glorot<R: Rng>(rng: &mut R, fan_in: usize, fan_out: usize, n: usize) -> Vec<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..n).map(|_| rng.random_range(-limit..=limit)).collect()
}

impl Layer {
    pub fn conv<R: Rng>(rng: &mut R, in_channels: usize, filters: usize, kernel_h: usize, kernel_w: usize) -> Self {
        let area = kernel_h * kernel_w;
        Layer::Conv2d {
            in_channels,
            filters,
            kernel_h,
            kernel_w,
            weights: glorot(rng, area * in_channels, area * filters, filters * area * in_channels),
            bias: vec![0.0; filters],
        }
    }

    pub fn dense<R: Rng>(rng: &mut R, inputs: usize, outputs: usize) -> Self {
        Layer::Dense {
            inputs,
            outputs,
            weights: glorot(rng, inputs, outputs, inputs * outputs),
            bias: vec![0.0; outputs],
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Conv2d { .. } => "conv2d",
            Layer::Relu => "relu",
            Layer::MaxPool { .. } => "max_pool",
            Layer::Flatten => "flatten",
            Layer::Dense { .. } => "dense",
        }
    }

    /// Output shape, or a description of why `input` does not fit.
    pub fn output_shape(&self, input: Shape3) -> Result<Shape3, String> {
        match *self {
            Layer::Conv2d {
                in_channels,
                filters,
                kernel_h,
                kernel_w,
                ..
            } => {
                if input.c != in_channels {
                    return Err(format!("conv2d expects {in_channels} channels, got {}", input.c));
                }
                if kernel_h == 0 || kernel_w == 0 || kernel_h > input.h || kernel_w > input.w {
                    return Err(format!(
                        "conv2d kernel {kernel_h}x{kernel_w} does not fit input {input}"
                    ));
                }
                Ok(Shape3::new(input.h - kernel_h + 1, input.w - kernel_w + 1, filters))
            }
            Layer::Relu => Ok(input),
            Layer::MaxPool { pool_h, pool_w } => {
                if pool_h == 0 || pool_w == 0 || pool_h > input.h || pool_w > input.w {
                    return Err(format!("max_pool {pool_h}x{pool_w} does not fit input {input}"));
                }
                Ok(Shape3::new(input.h / pool_h, input.w / pool_w, input.c))
            }
            Layer::Flatten => Ok(Shape3::new(1, 1, input.len())),
            Layer::Dense { inputs, outputs, .. } => {
                if input.len() != inputs {
                    return Err(format!("dense expects {inputs} inputs, got {}", input.len()));
                }
                Ok(Shape3::new(1, 1, outputs))
            }
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Layer::Conv2d { weights, bias, .. } | Layer::Dense { weights, bias, .. } => weights.len() + bias.len(),
            _ => 0,
        }
    }

    /// Parameters in storage order: weights, then bias.
    pub fn params(&self) -> impl Iterator<Item = &f64> {
        let (w, b): (&[f64], &[f64]) = match self {
            Layer::Conv2d { weights, bias, .. } | Layer::Dense { weights, bias, .. } => (weights, bias),
            _ => (&[], &[]),
        };
        w.iter().chain(b)
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        let (w, b): (&mut [f64], &mut [f64]) = match self {
            Layer::Conv2d { weights, bias, .. } | Layer::Dense { weights, bias, .. } => (weights, bias),
            _ => (&mut [], &mut []),
        };
        w.iter_mut().chain(b.iter_mut())
    }

    pub fn forward(&self, input: &[f64], shape: Shape3) -> (Vec<f64>, Cache) {
        match self {
            Layer::Conv2d {
                in_channels,
                filters,
                kernel_h,
                kernel_w,
                weights,
                bias,
            } => {
                let (cin, nf, kh, kw) = (*in_channels, *filters, *kernel_h, *kernel_w);
                let oh = shape.h - kh + 1;
                let ow = shape.w - kw + 1;
                let mut out = vec![0.0; oh * ow * nf];
                let krow = kw * cin;
                for oy in 0..oh {
                    for ox in 0..ow {
                        let o = &mut out[(oy * ow + ox) * nf..(oy * ow + ox + 1) * nf];
                        o.copy_from_slice(bias);
                        for ky in 0..kh {
                            let start = ((oy + ky) * shape.w + ox) * cin;
                            let patch = &input[start..start + krow];
                            for (f, acc) in o.iter_mut().enumerate() {
                                let wrow = &weights[(f * kh + ky) * krow..(f * kh + ky + 1) * krow];
                                *acc += patch.iter().zip(wrow).map(|(a, b)| a * b).sum::<f64>();
                            }
                        }
                    }
                }
                (out, Cache::Input(input.to_vec()))
            }
            Layer::Relu => (
                input.iter().map(|&v| v.max(0.0)).collect(),
                Cache::Input(input.to_vec()),
            ),
            Layer::MaxPool { pool_h, pool_w } => {
                let (ph, pw) = (*pool_h, *pool_w);
                let (oh, ow, c) = (shape.h / ph, shape.w / pw, shape.c);
                let mut out = vec![0.0; oh * ow * c];
                let mut argmax = vec![0usize; oh * ow * c];
                for oy in 0..oh {
                    for ox in 0..ow {
                        for ch in 0..c {
                            let mut best = f64::NEG_INFINITY;
                            let mut best_idx = 0;
                            for dy in 0..ph {
                                for dx in 0..pw {
                                    let idx = ((oy * ph + dy) * shape.w + ox * pw + dx) * c + ch;
                                    // strict comparison keeps the first maximum in scan order
                                    if input[idx] > best {
                                        best = input[idx];
                                        best_idx = idx;
                                    }
                                }
                            }
                            let o = (oy * ow + ox) * c + ch;
                            out[o] = best;
                            argmax[o] = best_idx;
                        }
                    }
                }
                (out, Cache::Argmax(argmax))
            }
            Layer::Flatten => (input.to_vec(), Cache::None),
            Layer::Dense {
                inputs,
                outputs,
                weights,
                bias,
            } => {
                let out = (0..*outputs)
                    .map(|o| {
                        bias[o]
                            + weights[o * inputs..(o + 1) * inputs]
                                .iter()
                                .zip(input)
                                .map(|(w, x)| w * x)
                                .sum::<f64>()
                    })
                    .collect();
                (out, Cache::Input(input.to_vec()))
            }
        }
    }

    /// Returns the gradient with respect to the layer input and accumulates
    /// parameter gradients into `grad_params` (same order as [`Layer::params`]).
    pub fn backward(&self, grad_out: &[f64], cache: &Cache, in_shape: Shape3, grad_params: &mut [f64]) -> Vec<f64> {
        match (self, cache) {
            (
                Layer::Conv2d {
                    in_channels,
                    filters,
                    kernel_h,
                    kernel_w,
                    weights,
                    ..
                },
                Cache::Input(input),
            ) => {
                let (cin, nf, kh, kw) = (*in_channels, *filters, *kernel_h, *kernel_w);
                let oh = in_shape.h - kh + 1;
                let ow = in_shape.w - kw + 1;
                let krow = kw * cin;
                let (gw, gb) = grad_params.split_at_mut(weights.len());
                let mut grad_in = vec![0.0; input.len()];
                for oy in 0..oh {
                    for ox in 0..ow {
                        let go = &grad_out[(oy * ow + ox) * nf..(oy * ow + ox + 1) * nf];
                        for (f, &g) in go.iter().enumerate() {
                            gb[f] += g;
                        }
                        for ky in 0..kh {
                            let start = ((oy + ky) * in_shape.w + ox) * cin;
                            for (f, &g) in go.iter().enumerate() {
                                if g == 0.0 {
                                    continue;
                                }
                                let off = (f * kh + ky) * krow;
                                let patch = &input[start..start + krow];
                                for (gwv, &x) in gw[off..off + krow].iter_mut().zip(patch) {
                                    *gwv += g * x;
                                }
                                let wrow = &weights[off..off + krow];
                                for (gi, &w) in grad_in[start..start + krow].iter_mut().zip(wrow) {
                                    *gi += g * w;
                                }
                            }
                        }
                    }
                }
                grad_in
            }
            (Layer::Relu, Cache::Input(input)) => grad_out
                .iter()
                .zip(input)
                .map(|(&g, &x)| if x > 0.0 { g } else { 0.0 })
                .collect(),
            (Layer::MaxPool { .. }, Cache::Argmax(argmax)) => {
                let mut grad_in = vec![0.0; in_shape.len()];
                for (&g, &idx) in grad_out.iter().zip(argmax) {
                    grad_in[idx] += g;
                }
                grad_in
            }
            (Layer::Flatten, _) => grad_out.to_vec(),
            (
                Layer::Dense {
                    inputs,
                    outputs,
                    weights,
                    ..
                },
                Cache::Input(input),
            ) => {
                let (gw, gb) = grad_params.split_at_mut(weights.len());
                let mut grad_in = vec![0.0; *inputs];
                for o in 0..*outputs {
                    let g = grad_out[o];
                    gb[o] += g;
                    let row = o * inputs..(o + 1) * inputs;
                    for ((gwv, gi), (&x, &w)) in gw[row.clone()]
                        .iter_mut()
                        .zip(grad_in.iter_mut())
                        .zip(input.iter().zip(&weights[row]))
                    {
                        *gwv += g * x;
                        *gi += g * w;
                    }
                }
                grad_in
            }
            (layer, _) => unreachable!("cache does not belong to {} layer", layer.kind()),
        }
    }
}
