use crate::error::{Error, Result};
use crate::tensor::Tensor3;

use super::Matrix;

pub fn relu(t: &Tensor3) -> Tensor3 {
    t.map(|v| v.max(0.0))
}

pub fn relu_vec(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| x.max(0.0)).collect()
}

/// Add `bias[c]` to every value of channel `c`.
pub fn add_channel_bias(t: &mut Tensor3, bias: &[f64]) -> Result<()> {
    if bias.len() != t.depth() {
        return Err(Error::contract(format!(
            "{} biases for {} channels",
            bias.len(),
            t.depth()
        )));
    }
    for px in t.data_mut().chunks_exact_mut(bias.len()) {
        for (v, b) in px.iter_mut().zip(bias) {
            *v += b;
        }
    }
    Ok(())
}

/// 2x2 average pool at stride one: `H x W x D -> (H-1) x (W-1) x D`.
pub fn avg_pool_s1(t: &Tensor3) -> Result<Tensor3> {
    let (h, w, d) = t.dims();
    if h < 2 || w < 2 {
        return Err(Error::contract(format!("cannot 2x2-pool a {h}x{w} feature map")));
    }
    Ok(Tensor3::from_fn(h - 1, w - 1, d, |i, j, c| {
        0.25 * (t.get(i, j, c) + t.get(i, j + 1, c) + t.get(i + 1, j, c) + t.get(i + 1, j + 1, c))
    }))
}

/// Keep the zero-based even rows and columns.
pub fn even_index_downsample(t: &Tensor3) -> Tensor3 {
    let (h, w, d) = t.dims();
    Tensor3::from_fn(h.div_ceil(2), w.div_ceil(2), d, |i, j, c| t.get(2 * i, 2 * j, c))
}

/// `W x + b`
pub fn fully_connected(x: &[f64], weights: &Matrix, bias: &[f64]) -> Result<Vec<f64>> {
    let (rows, cols) = weights.dims();
    if x.len() != cols || bias.len() != rows {
        return Err(Error::contract(format!(
            "{rows}x{cols} layer cannot take {} inputs with {} biases",
            x.len(),
            bias.len()
        )));
    }
    Ok((0..rows)
        .map(|r| bias[r] + weights.row(r).iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
        .collect())
}
