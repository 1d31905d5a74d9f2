//! Dense row-major tensors.
//!
//! Both types serialize as `{"shape": [...], "data": [...]}` with the last
//! dimension varying fastest.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Wire form shared by every tensor type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorDoc {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl TensorDoc {
    pub(crate) fn check(&self, field: &str, rank: usize) -> Result<()> {
        if self.shape.len() != rank {
            return Err(Error::schema(
                field,
                format!("expected rank {rank}, found shape {:?}", self.shape),
            ));
        }
        let count: usize = self.shape.iter().product();
        if count != self.data.len() {
            return Err(Error::schema(
                field,
                format!("shape {:?} needs {count} values, found {}", self.shape, self.data.len()),
            ));
        }
        if let Some(v) = self.data.iter().find(|v| !v.is_finite()) {
            return Err(Error::schema(field, format!("non-finite value {v}")));
        }
        Ok(())
    }
}

/// An `H x W x D` image or feature map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TensorDoc", into = "TensorDoc")]
pub struct Tensor3 {
    h: usize,
    w: usize,
    d: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(h: usize, w: usize, d: usize) -> Self {
        Tensor3 {
            h,
            w,
            d,
            data: vec![0.0; h * w * d],
        }
    }

    pub fn from_vec(h: usize, w: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        TensorDoc {
            shape: vec![h, w, d],
            data,
        }
        .try_into()
    }

    pub fn from_fn(h: usize, w: usize, d: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(h * w * d);
        for i in 0..h {
            for j in 0..w {
                for c in 0..d {
                    data.push(f(i, j, c));
                }
            }
        }
        Tensor3 { h, w, d, data }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.h, self.w, self.d)
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn depth(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, c: usize) -> usize {
        (i * self.w + j) * self.d + c
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, c: usize) -> f64 {
        self.data[self.index(i, j, c)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, c: usize, v: f64) {
        let idx = self.index(i, j, c);
        self.data[idx] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Tensor3 {
            data: self.data.iter().map(|&v| f(v)).collect(),
            ..*self
        }
    }

    pub fn max_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest absolute difference to `other`; infinite if shapes differ.
    pub fn max_abs_diff(&self, other: &Tensor3) -> f64 {
        if self.dims() != other.dims() {
            return f64::INFINITY;
        }
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| f64::max(m, (a - b).abs()))
    }
}

impl TryFrom<TensorDoc> for Tensor3 {
    type Error = Error;

    fn try_from(doc: TensorDoc) -> Result<Self> {
        doc.check("tensor", 3)?;
        Ok(Tensor3 {
            h: doc.shape[0],
            w: doc.shape[1],
            d: doc.shape[2],
            data: doc.data,
        })
    }
}

impl From<Tensor3> for TensorDoc {
    fn from(t: Tensor3) -> Self {
        TensorDoc {
            shape: vec![t.h, t.w, t.d],
            data: t.data,
        }
    }
}

/// A stack of `K` kernels, each `R_h x R_w x D`, stored as `[R_h, R_w, D, K]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TensorDoc", into = "TensorDoc")]
pub struct Tensor4 {
    rh: usize,
    rw: usize,
    d: usize,
    k: usize,
    data: Vec<f64>,
}

impl Tensor4 {
    pub fn zeros(rh: usize, rw: usize, d: usize, k: usize) -> Self {
        Tensor4 {
            rh,
            rw,
            d,
            k,
            data: vec![0.0; rh * rw * d * k],
        }
    }

    pub fn from_vec(rh: usize, rw: usize, d: usize, k: usize, data: Vec<f64>) -> Result<Self> {
        TensorDoc {
            shape: vec![rh, rw, d, k],
            data,
        }
        .try_into()
    }

    pub fn from_fn(
        rh: usize,
        rw: usize,
        d: usize,
        k: usize,
        mut f: impl FnMut(usize, usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(rh * rw * d * k);
        for m in 0..rh {
            for n in 0..rw {
                for c in 0..d {
                    for kk in 0..k {
                        data.push(f(m, n, c, kk));
                    }
                }
            }
        }
        Tensor4 { rh, rw, d, k, data }
    }

    /// `(R_h, R_w, D, K)`
    pub fn dims(&self) -> (usize, usize, usize, usize) {
        (self.rh, self.rw, self.d, self.k)
    }

    pub fn kernels(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn get(&self, m: usize, n: usize, c: usize, kk: usize) -> f64 {
        self.data[((m * self.rw + n) * self.d + c) * self.k + kk]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Kernel `kk` as an `R_h x R_w x D` tensor.
    pub fn kernel(&self, kk: usize) -> Tensor3 {
        Tensor3::from_fn(self.rh, self.rw, self.d, |m, n, c| self.get(m, n, c, kk))
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Tensor4 {
            data: self.data.iter().map(|v| alpha * v).collect(),
            ..*self
        }
    }
}

impl TryFrom<TensorDoc> for Tensor4 {
    type Error = Error;

    fn try_from(doc: TensorDoc) -> Result<Self> {
        doc.check("kernel", 4)?;
        Ok(Tensor4 {
            rh: doc.shape[0],
            rw: doc.shape[1],
            d: doc.shape[2],
            k: doc.shape[3],
            data: doc.data,
        })
    }
}

impl From<Tensor4> for TensorDoc {
    fn from(t: Tensor4) -> Self {
        TensorDoc {
            shape: vec![t.rh, t.rw, t.d, t.k],
            data: t.data,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_major_layout() {
        let t = Tensor3::from_fn(2, 3, 2, |i, j, c| (100 * i + 10 * j + c) as f64);
        assert_eq!(t.data()[..4], [0.0, 1.0, 10.0, 11.0]);
        assert_eq!(t.get(1, 2, 1), 121.0);
        let k = Tensor4::from_fn(2, 2, 1, 3, |m, n, _, kk| (100 * m + 10 * n + kk) as f64);
        assert_eq!(k.data()[..4], [0.0, 1.0, 2.0, 10.0]);
        assert_eq!(k.kernel(2).get(1, 1, 0), 112.0);
    }

    #[test]
    fn json_wire_form() {
        let t = Tensor3::from_vec(1, 2, 1, vec![0.5, -1.0]).unwrap();
        let s = serde_json::to_string(&t).unwrap();
        assert_eq!(s, r#"{"shape":[1,2,1],"data":[0.5,-1.0]}"#);
        assert_eq!(serde_json::from_str::<Tensor3>(&s).unwrap(), t);
    }

    #[test]
    fn rejects_inconsistent_documents() {
        assert!(serde_json::from_str::<Tensor3>(r#"{"shape":[2,2,1],"data":[1,2,3]}"#).is_err());
        assert!(serde_json::from_str::<Tensor3>(r#"{"shape":[4],"data":[1,2,3,4]}"#).is_err());
        assert!(Tensor4::from_vec(1, 1, 1, 2, vec![1.0]).is_err());
    }
}
