//! Offline digital trainer for [`CnnModel`].
//!
//! Plain backpropagation with Adam on the softmax cross-entropy of the class
//! scores. Arithmetic is `f32` and strictly sequential, so a fixed seed gives
//! bit-identical weights on every run.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CnnModel, Matrix, CLASSES, FEATURES, FLAT, HIDDEN, IMAGE_SIDE, KERNEL_SIDE};
use crate::error::{Error, Result};
use crate::io::mnist::Dataset;
use crate::tensor::Tensor4;

const C1: usize = IMAGE_SIDE - KERNEL_SIDE + 1; // 24
const C2: usize = C1 - KERNEL_SIDE + 1; // 20
const POOLED: usize = C2 / 2; // 10

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 5,
            batch_size: 64,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::config("epochs and batch size must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) || self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(Error::config("learning rate and epsilon must be positive"));
        }
        for beta in [self.beta1, self.beta2] {
            if !(0.0..1.0).contains(&beta) {
                return Err(Error::config(format!("Adam beta {beta} must lie in [0, 1)")));
            }
        }
        Ok(())
    }
}

/// Loss history of one training run.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TrainReport {
    /// Mean cross-entropy of every mini-batch, in order.
    pub batch_losses: Vec<f64>,
    /// Mean cross-entropy of each epoch.
    pub epoch_losses: Vec<f64>,
}

/// Train a fresh model on `data`.
pub fn train_reference(data: &Dataset, cfg: &TrainConfig) -> Result<(CnnModel, TrainReport)> {
    train_reference_with(data, cfg, |_, _| {})
}

/// [`train_reference`], calling `on_epoch(epoch, mean_loss)` after each epoch.
pub fn train_reference_with(
    data: &Dataset,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<(CnnModel, TrainReport)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::contract("cannot train on an empty dataset"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = Params::init(&mut rng);
    let mut grads = Params::zeros();
    let mut adam = Adam::new(cfg);
    let mut ws = Workspace::default();
    let images: Vec<Vec<f32>> = data
        .images
        .iter()
        .map(|im| im.data().iter().map(|&v| v as f32).collect())
        .collect();

    let mut report = TrainReport::default();
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grads.clear();
            let mut loss = 0.0f32;
            for &idx in batch {
                loss += ws.forward_backward(&params, &images[idx], data.labels[idx], &mut grads);
            }
            let scale = 1.0 / batch.len() as f32;
            grads.blocks_mut().into_iter().flatten().for_each(|v| *v *= scale);
            adam.step(&mut params, &grads);
            let mean = f64::from(loss * scale);
            epoch_sum += mean * batch.len() as f64;
            report.batch_losses.push(mean);
        }
        let epoch_mean = epoch_sum / data.len() as f64;
        report.epoch_losses.push(epoch_mean);
        on_epoch(epoch, epoch_mean);
    }
    Ok((params.to_model(), report))
}

/// All trainable tensors, flattened in the same layouts as [`CnnModel`].
#[derive(Clone)]
struct Params {
    w1: Vec<f32>,
    b1: Vec<f32>,
    w2: Vec<f32>,
    b2: Vec<f32>,
    w3: Vec<f32>,
    b3: Vec<f32>,
    w4: Vec<f32>,
    b4: Vec<f32>,
}

impl Params {
    fn zeros() -> Self {
        let k2 = KERNEL_SIDE * KERNEL_SIDE;
        Params {
            w1: vec![0.0; k2 * FEATURES],
            b1: vec![0.0; FEATURES],
            w2: vec![0.0; k2 * FEATURES * FEATURES],
            b2: vec![0.0; FEATURES],
            w3: vec![0.0; HIDDEN * FLAT],
            b3: vec![0.0; HIDDEN],
            w4: vec![0.0; CLASSES * HIDDEN],
            b4: vec![0.0; CLASSES],
        }
    }

    /// He-uniform weights, zero biases.
    fn init(rng: &mut ChaCha8Rng) -> Self {
        let mut p = Params::zeros();
        let k2 = KERNEL_SIDE * KERNEL_SIDE;
        let mut fill = |v: &mut [f32], fan_in: usize| {
            let limit = (6.0 / fan_in as f32).sqrt();
            v.iter_mut().for_each(|x| *x = rng.gen_range(-limit..limit));
        };
        fill(&mut p.w1, k2);
        fill(&mut p.w2, k2 * FEATURES);
        fill(&mut p.w3, FLAT);
        fill(&mut p.w4, HIDDEN);
        p
    }

    fn blocks_mut(&mut self) -> [&mut [f32]; 8] {
        [
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
            &mut self.w3,
            &mut self.b3,
            &mut self.w4,
            &mut self.b4,
        ]
    }

    fn blocks(&self) -> [&[f32]; 8] {
        [&self.w1, &self.b1, &self.w2, &self.b2, &self.w3, &self.b3, &self.w4, &self.b4]
    }

    fn clear(&mut self) {
        self.blocks_mut().into_iter().for_each(|v| v.fill(0.0));
    }

    fn to_model(&self) -> CnnModel {
        let wide = |v: &[f32]| v.iter().map(|&x| f64::from(x)).collect::<Vec<f64>>();
        let k = KERNEL_SIDE;
        CnnModel {
            conv1: Tensor4::from_vec(k, k, 1, FEATURES, wide(&self.w1)).expect("conv1 layout"),
            conv1_bias: wide(&self.b1),
            conv2: Tensor4::from_vec(k, k, FEATURES, FEATURES, wide(&self.w2)).expect("conv2 layout"),
            conv2_bias: wide(&self.b2),
            fc1: Matrix::from_vec(HIDDEN, FLAT, wide(&self.w3)).expect("fc1 layout"),
            fc1_bias: wide(&self.b3),
            fc2: Matrix::from_vec(CLASSES, HIDDEN, wide(&self.w4)).expect("fc2 layout"),
            fc2_bias: wide(&self.b4),
        }
    }
}

struct Adam {
    lr: f32,
    beta1: f32,
    beta2: f32,
    eps: f32,
    t: i32,
    m: Params,
    v: Params,
}

impl Adam {
    fn new(cfg: &TrainConfig) -> Self {
        Adam {
            lr: cfg.learning_rate as f32,
            beta1: cfg.beta1 as f32,
            beta2: cfg.beta2 as f32,
            eps: cfg.epsilon as f32,
            t: 0,
            m: Params::zeros(),
            v: Params::zeros(),
        }
    }

    fn step(&mut self, params: &mut Params, grads: &Params) {
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let blocks = params.blocks_mut().into_iter().zip(grads.blocks()).zip(self.m.blocks_mut()).zip(self.v.blocks_mut());
        for (((p, g), m), v) in blocks {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                p[i] -= self.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + self.eps);
            }
        }
    }
}

/// Activation buffers reused across samples.
#[derive(Default)]
struct Workspace {
    a1: Vec<f32>,
    a2: Vec<f32>,
    flat: Vec<f32>,
    h: Vec<f32>,
    d_a1: Vec<f32>,
    d_z2: Vec<f32>,
    d_z1: Vec<f32>,
    d_h: Vec<f32>,
    d_flat: Vec<f32>,
}

/// Valid stride-one convolution of `side x side x d` by `[k, k, d, f]` kernels.
fn conv_forward(input: &[f32], side: usize, d: usize, w: &[f32], b: &[f32], out: &mut Vec<f32>) {
    let o = side - KERNEL_SIDE + 1;
    let f = b.len();
    out.clear();
    out.resize(o * o * f, 0.0);
    for i in 0..o {
        for j in 0..o {
            let acc = &mut out[(i * o + j) * f..(i * o + j + 1) * f];
            acc.copy_from_slice(b);
            for m in 0..KERNEL_SIDE {
                for n in 0..KERNEL_SIDE {
                    let px = &input[((i + m) * side + j + n) * d..][..d];
                    let wk = &w[(m * KERNEL_SIDE + n) * d * f..][..d * f];
                    for (c, &x) in px.iter().enumerate() {
                        if x != 0.0 {
                            for (a, &wv) in acc.iter_mut().zip(&wk[c * f..(c + 1) * f]) {
                                *a += x * wv;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Accumulate kernel/bias gradients and optionally the input gradient.
#[allow(clippy::too_many_arguments)]
fn conv_backward(
    input: &[f32],
    side: usize,
    d: usize,
    w: &[f32],
    d_out: &[f32],
    f: usize,
    dw: &mut [f32],
    db: &mut [f32],
    mut d_in: Option<&mut Vec<f32>>,
) {
    let o = side - KERNEL_SIDE + 1;
    if let Some(di) = d_in.as_deref_mut() {
        di.clear();
        di.resize(side * side * d, 0.0);
    }
    for i in 0..o {
        for j in 0..o {
            let g = &d_out[(i * o + j) * f..(i * o + j + 1) * f];
            if g.iter().all(|&v| v == 0.0) {
                continue;
            }
            for (acc, &gv) in db.iter_mut().zip(g) {
                *acc += gv;
            }
            for m in 0..KERNEL_SIDE {
                for n in 0..KERNEL_SIDE {
                    let base = ((i + m) * side + j + n) * d;
                    let koff = (m * KERNEL_SIDE + n) * d * f;
                    for c in 0..d {
                        let x = input[base + c];
                        let row = koff + c * f;
                        if x != 0.0 {
                            for (acc, &gv) in dw[row..row + f].iter_mut().zip(g) {
                                *acc += x * gv;
                            }
                        }
                        if let Some(di) = d_in.as_deref_mut() {
                            let s: f32 = w[row..row + f].iter().zip(g).map(|(a, b)| a * b).sum();
                            di[base + c] += s;
                        }
                    }
                }
            }
        }
    }
}

impl Workspace {
    /// One sample: accumulate gradients into `grads`, return its loss.
    fn forward_backward(&mut self, p: &Params, x: &[f32], label: u8, grads: &mut Params) -> f32 {
        // Forward.
        conv_forward(x, IMAGE_SIDE, 1, &p.w1, &p.b1, &mut self.a1);
        self.a1.iter_mut().for_each(|v| *v = v.max(0.0));
        conv_forward(&self.a1, C1, FEATURES, &p.w2, &p.b2, &mut self.a2);
        self.a2.iter_mut().for_each(|v| *v = v.max(0.0));

        // Stride-one 2x2 average pool followed by even-index decimation only
        // keeps the windows anchored at even coordinates.
        self.flat.clear();
        for i in 0..POOLED {
            for j in 0..POOLED {
                for c in 0..FEATURES {
                    let at = |di: usize, dj: usize| self.a2[((2 * i + di) * C2 + 2 * j + dj) * FEATURES + c];
                    self.flat.push(0.25 * (at(0, 0) + at(0, 1) + at(1, 0) + at(1, 1)));
                }
            }
        }

        self.h.clear();
        for r in 0..HIDDEN {
            let z: f32 = p.b3[r] + p.w3[r * FLAT..(r + 1) * FLAT].iter().zip(&self.flat).map(|(a, b)| a * b).sum::<f32>();
            self.h.push(z.max(0.0));
        }
        let mut scores = [0.0f32; CLASSES];
        for (r, s) in scores.iter_mut().enumerate() {
            *s = p.b4[r] + p.w4[r * HIDDEN..(r + 1) * HIDDEN].iter().zip(&self.h).map(|(a, b)| a * b).sum::<f32>();
        }

        // Softmax cross-entropy.
        let max = scores.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let mut probs = scores.map(|s| (s - max).exp());
        let total: f32 = probs.iter().sum();
        probs.iter_mut().for_each(|v| *v /= total);
        let label = usize::from(label);
        let loss = -probs[label].max(f32::MIN_POSITIVE).ln();
        let mut d_scores = probs;
        d_scores[label] -= 1.0;

        // fc2
        self.d_h.clear();
        self.d_h.resize(HIDDEN, 0.0);
        for (r, &g) in d_scores.iter().enumerate() {
            grads.b4[r] += g;
            let row = r * HIDDEN;
            for k in 0..HIDDEN {
                grads.w4[row + k] += g * self.h[k];
                self.d_h[k] += g * p.w4[row + k];
            }
        }
        // relu + fc1
        self.d_flat.clear();
        self.d_flat.resize(FLAT, 0.0);
        for r in 0..HIDDEN {
            if self.h[r] <= 0.0 {
                continue;
            }
            let g = self.d_h[r];
            grads.b3[r] += g;
            let row = r * FLAT;
            for k in 0..FLAT {
                grads.w3[row + k] += g * self.flat[k];
                self.d_flat[k] += g * p.w3[row + k];
            }
        }
        // pool + decimation, then relu of conv2
        self.d_z2.clear();
        self.d_z2.resize(C2 * C2 * FEATURES, 0.0);
        for i in 0..POOLED {
            for j in 0..POOLED {
                for c in 0..FEATURES {
                    let g = 0.25 * self.d_flat[(i * POOLED + j) * FEATURES + c];
                    for (di, dj) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                        let idx = ((2 * i + di) * C2 + 2 * j + dj) * FEATURES + c;
                        if self.a2[idx] > 0.0 {
                            self.d_z2[idx] = g;
                        }
                    }
                }
            }
        }
        conv_backward(
            &self.a1,
            C1,
            FEATURES,
            &p.w2,
            &self.d_z2,
            FEATURES,
            &mut grads.w2,
            &mut grads.b2,
            Some(&mut self.d_a1),
        );
        self.d_z1.clear();
        self.d_z1
            .extend(self.d_a1.iter().zip(&self.a1).map(|(&g, &a)| if a > 0.0 { g } else { 0.0 }));
        conv_backward(x, IMAGE_SIDE, 1, &p.w1, &self.d_z1, FEATURES, &mut grads.w1, &mut grads.b1, None);
        loss
    }
}
