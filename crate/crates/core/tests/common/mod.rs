//! Reference implementations used to check the library. Each one takes a
//! different, deliberately naive route to the same answer.

#![allow(dead_code, clippy::needless_range_loop)]

use gaitscope::classifiers::Kernel;
use gaitscope::cnn::{CnnModel, Layer, Shape3};
use gaitscope::GaitLabel;
use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0))
}

pub fn label_of(bit: bool) -> GaitLabel {
    if bit {
        GaitLabel::Abnormal
    } else {
        GaitLabel::Normal
    }
}

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Covariance with divisor `n`, as a dense row-major matrix.
pub fn population_covariance(x: ArrayView2<f64>) -> Vec<Vec<f64>> {
    let (n, d) = x.dim();
    let means: Vec<f64> = (0..d)
        .map(|j| (0..n).map(|i| x[[i, j]]).sum::<f64>() / n as f64)
        .collect();
    let mut cov = vec![vec![0.0; d]; d];
    for a in 0..d {
        for b in 0..d {
            cov[a][b] = (0..n)
                .map(|i| (x[[i, a]] - means[a]) * (x[[i, b]] - means[b]))
                .sum::<f64>()
                / n as f64;
        }
    }
    cov
}

/// Cyclic Jacobi eigenvalue iteration for a symmetric matrix.
/// Returns eigenvalues in descending order.
pub fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|p| (0..n).filter(move |&q| q != p).map(move |q| (p, q)))
            .map(|(p, q)| a[p][q] * a[p][q])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    ev
}

/// Exhaustive kNN: full sort of (distance, index), majority of the first k.
pub fn knn_oracle(train: ArrayView2<f64>, labels: &[GaitLabel], q: &[f64], k: usize) -> GaitLabel {
    let mut d: Vec<(f64, usize)> = train
        .rows()
        .into_iter()
        .enumerate()
        .map(|(i, r)| (r.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), i))
        .collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let abnormal = d[..k].iter().filter(|(_, i)| labels[*i] == GaitLabel::Abnormal).count();
    label_of(2 * abnormal > k)
}

/// Soft-margin SVM dual solved by accelerated projected gradient ascent.
/// Returns `(alphas, bias)` for labels in `{-1, +1}`.
pub fn svm_dual_oracle(x: ArrayView2<f64>, y: &[f64], kernel: &Kernel, c: f64) -> (Vec<f64>, f64) {
    let n = y.len();
    let q: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| y[i] * y[j] * kernel.eval(x.row(i), x.row(j))).collect())
        .collect();
    // power iteration for the step size
    let mut v = vec![1.0; n];
    let mut lmax = 1.0;
    for _ in 0..200 {
        let w: Vec<f64> = (0..n).map(|i| (0..n).map(|j| q[i][j] * v[j]).sum()).collect();
        let norm = w.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm == 0.0 {
            break;
        }
        lmax = norm / v.iter().map(|a| a * a).sum::<f64>().sqrt();
        v = w.iter().map(|a| a / norm).collect();
    }
    let step = 1.0 / (lmax * 1.01);
    let project = |v: &[f64]| -> Vec<f64> {
        // find mu with sum_i y_i clip(v_i - mu y_i, 0, C) = 0 (decreasing in mu)
        let h = |mu: f64| -> f64 { (0..n).map(|i| y[i] * (v[i] - mu * y[i]).clamp(0.0, c)).sum() };
        let bound = v.iter().fold(0.0f64, |m, a| m.max(a.abs())) + c + 1.0;
        let (mut lo, mut hi) = (-bound, bound);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if h(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let mu = 0.5 * (lo + hi);
        (0..n).map(|i| (v[i] - mu * y[i]).clamp(0.0, c)).collect()
    };
    let mut alpha = vec![0.0; n];
    let mut prev = alpha.clone();
    let mut t = 1.0f64;
    for _ in 0..30_000 {
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let mom = (t - 1.0) / t_next;
        let z: Vec<f64> = (0..n).map(|i| alpha[i] + mom * (alpha[i] - prev[i])).collect();
        let grad: Vec<f64> = (0..n)
            .map(|i| 1.0 - (0..n).map(|j| q[i][j] * z[j]).sum::<f64>())
            .collect();
        let next = project(&(0..n).map(|i| z[i] + step * grad[i]).collect::<Vec<_>>());
        prev = std::mem::replace(&mut alpha, next);
        t = t_next;
    }
    let g: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| alpha[j] * y[j] * kernel.eval(x.row(j), x.row(i))).sum())
        .collect();
    let eps = 1e-7 * c;
    let free: Vec<usize> = (0..n).filter(|&i| alpha[i] > eps && alpha[i] < c - eps).collect();
    let bias = if !free.is_empty() {
        free.iter().map(|&i| y[i] - g[i]).sum::<f64>() / free.len() as f64
    } else {
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for i in 0..n {
            let implied = y[i] - g[i];
            if (alpha[i] <= eps) == (y[i] > 0.0) {
                lo = lo.max(implied);
            } else {
                hi = hi.min(implied);
            }
        }
        0.5 * (lo + hi)
    };
    (alpha, bias)
}

pub fn svm_oracle_decision(x: ArrayView2<f64>, y: &[f64], kernel: &Kernel, alpha: &[f64], bias: f64, q: &[f64]) -> f64 {
    let qv = ndarray::ArrayView1::from(q);
    (0..y.len())
        .map(|i| alpha[i] * y[i] * kernel.eval(x.row(i), qv))
        .sum::<f64>()
        + bias
}

/// Straightforward nested-loop evaluation of a network's layers on one
/// sample, indexing activations as `[y][x][c]` arrays.
pub fn cnn_forward_oracle(model: &CnnModel, sample: &[f64]) -> [f64; 2] {
    let s = model.shapes[0];
    let mut act: Vec<Vec<Vec<f64>>> = (0..s.h)
        .map(|y| {
            (0..s.w)
                .map(|x| (0..s.c).map(|c| sample[(y * s.w + x) * s.c + c]).collect())
                .collect()
        })
        .collect();
    let mut flat: Option<Vec<f64>> = None;
    for layer in &model.layers {
        match layer {
            Layer::Conv2d {
                in_channels,
                filters,
                kernel_h,
                kernel_w,
                weights,
                bias,
            } => {
                let (h, w) = (act.len(), act[0].len());
                let mut out = vec![vec![vec![0.0; *filters]; w - kernel_w + 1]; h - kernel_h + 1];
                for (oy, row) in out.iter_mut().enumerate() {
                    for (ox, cell) in row.iter_mut().enumerate() {
                        for (f, v) in cell.iter_mut().enumerate() {
                            let mut acc = bias[f];
                            for ky in 0..*kernel_h {
                                for kx in 0..*kernel_w {
                                    for ci in 0..*in_channels {
                                        let wi = ((f * kernel_h + ky) * kernel_w + kx) * in_channels + ci;
                                        acc += weights[wi] * act[oy + ky][ox + kx][ci];
                                    }
                                }
                            }
                            *v = acc;
                        }
                    }
                }
                act = out;
            }
            Layer::Relu => match &mut flat {
                Some(v) => v.iter_mut().for_each(|a| *a = a.max(0.0)),
                None => act.iter_mut().flatten().flatten().for_each(|a| *a = a.max(0.0)),
            },
            Layer::MaxPool { pool_h, pool_w } => {
                let (h, w, c) = (act.len() / pool_h, act[0].len() / pool_w, act[0][0].len());
                let mut out = vec![vec![vec![f64::NEG_INFINITY; c]; w]; h];
                for oy in 0..h {
                    for ox in 0..w {
                        for ch in 0..c {
                            for dy in 0..*pool_h {
                                for dx in 0..*pool_w {
                                    let v = act[oy * pool_h + dy][ox * pool_w + dx][ch];
                                    if v > out[oy][ox][ch] {
                                        out[oy][ox][ch] = v;
                                    }
                                }
                            }
                        }
                    }
                }
                act = out;
            }
            Layer::Flatten => {
                flat = Some(act.iter().flatten().flatten().copied().collect());
            }
            Layer::Dense {
                inputs,
                outputs,
                weights,
                bias,
            } => {
                let input = flat.take().expect("dense after flatten");
                assert_eq!(input.len(), *inputs);
                let out: Vec<f64> = (0..*outputs)
                    .map(|o| bias[o] + (0..*inputs).map(|i| weights[o * inputs + i] * input[i]).sum::<f64>())
                    .collect();
                flat = Some(out);
            }
        }
    }
    let logits = flat.expect("network ends in a dense layer");
    let m = logits[0].max(logits[1]);
    let (e0, e1) = ((logits[0] - m).exp(), (logits[1] - m).exp());
    [e0 / (e0 + e1), e1 / (e0 + e1)]
}

/// Largest relative error between a layer's analytic gradients (input and
/// parameters) and central differences of `sum(r * forward(x))`.
pub fn layer_gradient_error(layer: &Layer, shape: Shape3, rng: &mut ChaCha8Rng, h: f64) -> f64 {
    let input: Vec<f64> = (0..shape.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let (out, cache) = layer.forward(&input, shape);
    let r: Vec<f64> = (0..out.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let objective = |l: &Layer, x: &[f64]| -> f64 {
        let (o, _) = l.forward(x, shape);
        o.iter().zip(&r).map(|(a, b)| a * b).sum()
    };
    let mut gp = vec![0.0; layer.param_count()];
    let gin = layer.backward(&r, &cache, shape, &mut gp);
    let mut worst: f64 = 0.0;
    for i in 0..input.len() {
        let mut plus = input.clone();
        let mut minus = input.clone();
        plus[i] += h;
        minus[i] -= h;
        let num = (objective(layer, &plus) - objective(layer, &minus)) / (2.0 * h);
        worst = worst.max(rel_err(gin[i], num, 1e-6));
    }
    for p in 0..layer.param_count() {
        let mut plus = layer.clone();
        let mut minus = layer.clone();
        *plus.params_mut().nth(p).unwrap() += h;
        *minus.params_mut().nth(p).unwrap() -= h;
        let num = (objective(&plus, &input) - objective(&minus, &input)) / (2.0 * h);
        worst = worst.max(rel_err(gp[p], num, 1e-6));
    }
    worst
}
