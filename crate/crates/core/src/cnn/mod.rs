//! Two-layer MNIST network whose convolutions run on the simulated hardware.
//!
//! ```text
//! 28x28x1 -conv1-> 24x24x8 -relu-conv2-> 20x20x8 -relu-avgpool-> 19x19x8
//!         -even-> 10x10x8 -flatten-> 800 -fc1-relu-> 128 -fc2-> 10
//! ```
//!
//! Only the convolutions are photonic. Biases, ReLU, pooling, downsampling and
//! the fully connected layers run digitally on the host.

mod layers;
pub mod train;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conv::{deap_convolve, oracle_convolve, DeapConfig};
use crate::error::{Error, Result};
use crate::io::mnist::Dataset;
use crate::tensor::{Tensor3, Tensor4, TensorDoc};

pub use layers::{add_channel_bias, avg_pool_s1, even_index_downsample, fully_connected, relu, relu_vec};
pub use train::{train_reference, train_reference_with, TrainConfig, TrainReport};

pub const IMAGE_SIDE: usize = 28;
pub const KERNEL_SIDE: usize = 5;
pub const FEATURES: usize = 8;
pub const FLAT: usize = 800;
pub const HIDDEN: usize = 128;
pub const CLASSES: usize = 10;

/// Row-major `rows x cols` matrix; serializes like a rank-2 tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TensorDoc", into = "TensorDoc")]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::contract(format!(
                "{rows}x{cols} matrix needs {} values, found {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

impl TryFrom<TensorDoc> for Matrix {
    type Error = Error;

    fn try_from(doc: TensorDoc) -> Result<Self> {
        match doc.shape[..] {
            [rows, cols] => Matrix::from_vec(rows, cols, doc.data),
            _ => Err(Error::contract(format!("expected a rank-2 shape, found {:?}", doc.shape))),
        }
    }
}

impl From<Matrix> for TensorDoc {
    fn from(m: Matrix) -> Self {
        TensorDoc {
            shape: vec![m.rows, m.cols],
            data: m.data,
        }
    }
}

/// Trained parameters of the two-layer network.
#[derive(Debug, Clone, PartialEq)]
pub struct CnnModel {
    /// `5 x 5 x 1 x 8`
    pub conv1: Tensor4,
    pub conv1_bias: Vec<f64>,
    /// `5 x 5 x 8 x 8`
    pub conv2: Tensor4,
    pub conv2_bias: Vec<f64>,
    /// `128 x 800`, maps the flattened features to the hidden layer.
    pub fc1: Matrix,
    pub fc1_bias: Vec<f64>,
    /// `10 x 128`
    pub fc2: Matrix,
    pub fc2_bias: Vec<f64>,
}

impl CnnModel {
    pub fn zeros() -> Self {
        CnnModel {
            conv1: Tensor4::zeros(KERNEL_SIDE, KERNEL_SIDE, 1, FEATURES),
            conv1_bias: vec![0.0; FEATURES],
            conv2: Tensor4::zeros(KERNEL_SIDE, KERNEL_SIDE, FEATURES, FEATURES),
            conv2_bias: vec![0.0; FEATURES],
            fc1: Matrix::zeros(HIDDEN, FLAT),
            fc1_bias: vec![0.0; HIDDEN],
            fc2: Matrix::zeros(CLASSES, HIDDEN),
            fc2_bias: vec![0.0; CLASSES],
        }
    }

    /// Check every parameter block against the fixed architecture. Errors
    /// name the offending field.
    pub fn validate(&self) -> Result<()> {
        let expect = |field: &str, found: Vec<usize>, want: Vec<usize>| {
            if found == want {
                Ok(())
            } else {
                Err(Error::schema(field, format!("expected shape {want:?}, found {found:?}")))
            }
        };
        let t4 = |t: &Tensor4| {
            let (a, b, c, d) = t.dims();
            vec![a, b, c, d]
        };
        let m2 = |m: &Matrix| vec![m.rows, m.cols];
        expect("conv1", t4(&self.conv1), vec![KERNEL_SIDE, KERNEL_SIDE, 1, FEATURES])?;
        expect("conv1_bias", vec![self.conv1_bias.len()], vec![FEATURES])?;
        expect("conv2", t4(&self.conv2), vec![KERNEL_SIDE, KERNEL_SIDE, FEATURES, FEATURES])?;
        expect("conv2_bias", vec![self.conv2_bias.len()], vec![FEATURES])?;
        expect("fc1", m2(&self.fc1), vec![HIDDEN, FLAT])?;
        expect("fc1_bias", vec![self.fc1_bias.len()], vec![HIDDEN])?;
        expect("fc2", m2(&self.fc2), vec![CLASSES, HIDDEN])?;
        expect("fc2_bias", vec![self.fc2_bias.len()], vec![CLASSES])?;
        let blocks: [(&str, &[f64]); 8] = [
            ("conv1", self.conv1.data()),
            ("conv1_bias", &self.conv1_bias),
            ("conv2", self.conv2.data()),
            ("conv2_bias", &self.conv2_bias),
            ("fc1", self.fc1.data()),
            ("fc1_bias", &self.fc1_bias),
            ("fc2", self.fc2.data()),
            ("fc2_bias", &self.fc2_bias),
        ];
        for (field, values) in blocks {
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::schema(field, "non-finite parameter"));
            }
        }
        Ok(())
    }
}

/// Where the convolutions are evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Backend {
    Digital,
    Photonic(DeapConfig),
}

impl Backend {
    pub fn name(&self) -> &'static str {
        match self {
            Backend::Digital => "digital",
            Backend::Photonic(_) => "photonic",
        }
    }

    /// Convolve a non-negative feature map at stride one.
    ///
    /// The photonic path divides the input by its maximum so it fits the
    /// `[0, 1]` envelope range, and multiplies the adder output back.
    fn convolve(&self, input: &Tensor3, kernels: &Tensor4) -> Result<Tensor3> {
        match self {
            Backend::Digital => oracle_convolve(input, kernels, 1),
            Backend::Photonic(cfg) => {
                let scale = input.max_value();
                if scale <= 0.0 {
                    return oracle_convolve(&Tensor3::zeros(input.height(), input.width(), input.depth()), kernels, 1);
                }
                let envelopes = input.map(|v| v / scale);
                let out = deap_convolve(&envelopes, kernels, 1, cfg)?.out;
                Ok(out.map(|v| v * scale))
            }
        }
    }
}

/// Intermediate shapes recorded during one forward pass.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trace {
    pub stages: Vec<(&'static str, Vec<usize>)>,
}

impl Trace {
    fn push(&mut self, stage: &'static str, dims: Vec<usize>) {
        self.stages.push((stage, dims));
    }
}

fn dims3(t: &Tensor3) -> Vec<usize> {
    let (h, w, d) = t.dims();
    vec![h, w, d]
}

/// Class scores for one `28 x 28 x 1` image with pixels in `[0, 1]`.
pub fn deap_infer(model: &CnnModel, image: &Tensor3, backend: &Backend) -> Result<Vec<f64>> {
    deap_infer_traced(model, image, backend).map(|(scores, _)| scores)
}

/// [`deap_infer`] plus the shape of every intermediate stage.
pub fn deap_infer_traced(model: &CnnModel, image: &Tensor3, backend: &Backend) -> Result<(Vec<f64>, Trace)> {
    if image.dims() != (IMAGE_SIDE, IMAGE_SIDE, 1) {
        return Err(Error::contract(format!(
            "expected a 28x28x1 image, found {:?}",
            image.dims()
        )));
    }
    let mut trace = Trace::default();
    trace.push("input", dims3(image));

    let mut x = backend.convolve(image, &model.conv1)?;
    add_channel_bias(&mut x, &model.conv1_bias)?;
    let x = relu(&x);
    trace.push("conv1", dims3(&x));

    let mut x = backend.convolve(&x, &model.conv2)?;
    add_channel_bias(&mut x, &model.conv2_bias)?;
    let x = relu(&x);
    trace.push("conv2", dims3(&x));

    let x = avg_pool_s1(&x)?;
    trace.push("avg_pool", dims3(&x));

    let x = even_index_downsample(&x);
    trace.push("downsample", dims3(&x));

    let flat = x.into_vec();
    trace.push("flatten", vec![flat.len()]);

    let hidden = relu_vec(&fully_connected(&flat, &model.fc1, &model.fc1_bias)?);
    trace.push("fc1", vec![hidden.len()]);

    let scores = fully_connected(&hidden, &model.fc2, &model.fc2_bias)?;
    trace.push("fc2", vec![scores.len()]);
    Ok((scores, trace))
}

/// Index of the largest score; ties go to the lowest index.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
    pub predictions: Vec<u8>,
}

/// Classification accuracy over `dataset`. Images are evaluated in parallel.
pub fn evaluate(model: &CnnModel, dataset: &Dataset, backend: &Backend) -> Result<Evaluation> {
    if dataset.is_empty() {
        return Err(Error::contract("cannot evaluate on an empty dataset"));
    }
    let predictions = dataset
        .images
        .par_iter()
        .map(|image| deap_infer(model, image, backend).map(|s| argmax(&s) as u8))
        .collect::<Result<Vec<u8>>>()?;
    let correct = predictions
        .iter()
        .zip(&dataset.labels)
        .filter(|(p, l)| p == l)
        .count();
    Ok(Evaluation {
        correct,
        total: dataset.len(),
        accuracy: correct as f64 / dataset.len() as f64,
        predictions,
    })
}
