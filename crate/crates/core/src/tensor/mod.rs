//! Dense double-precision tensors with a reverse-mode tape.
//!
//! [`Tensor`] is a plain row-major value. Differentiation happens on a
//! [`Graph`], which records every operation applied to its nodes and replays
//! them backwards from a scalar loss. Trainable values live in a
//! [`ParamStore`] and are updated by [`Adam`].

mod adam;
mod graph;
mod kernels;
mod params;

pub use adam::{clip_global_norm, Adam, AdamConfig, AdamState};
pub use graph::{Graph, NodeId};
pub use params::{Gradients, ParamId, ParamStore};

use thiserror::Error;

/// Floor applied to probabilities before taking a logarithm.
pub const LOG_EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("shape {shape:?} does not match {len} values")]
    ShapeData { shape: Vec<usize>, len: usize },
    #[error("axis {axis} out of range for a tensor of rank {rank}")]
    Axis { axis: usize, rank: usize },
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Mismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("contract violated: {0}")]
    Contract(String),
}

pub type Result<T> = std::result::Result<T, TensorError>;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(TensorError::ShapeData { shape, len: data.len() });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Size of the last axis; 1 for scalars.
    pub fn cols(&self) -> usize {
        self.shape.last().copied().unwrap_or(1)
    }

    /// Product of every axis but the last.
    pub fn rows(&self) -> usize {
        if self.shape.len() <= 1 {
            1
        } else {
            self.shape[..self.shape.len() - 1].iter().product()
        }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols() + c]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Softmax along `axis` of an arbitrary-rank tensor.
pub fn softmax(logits: &Tensor, axis: usize) -> Result<Tensor> {
    let rank = logits.shape.len();
    if axis >= rank {
        return Err(TensorError::Axis { axis, rank });
    }
    let dim = logits.shape[axis];
    let inner: usize = logits.shape[axis + 1..].iter().product();
    let outer: usize = logits.shape[..axis].iter().product();
    let mut out = logits.clone();
    for o in 0..outer {
        for i in 0..inner {
            let base = o * dim * inner + i;
            let idx = |k: usize| base + k * inner;
            let max = (0..dim).map(|k| logits.data[idx(k)]).fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for k in 0..dim {
                let e = (logits.data[idx(k)] - max).exp();
                out.data[idx(k)] = e;
                total += e;
            }
            for k in 0..dim {
                out.data[idx(k)] /= total;
            }
        }
    }
    Ok(out)
}

/// `-ln p[target]` with the probability floored at [`LOG_EPS`].
pub fn cross_entropy_loss(distribution: &[f64], target: usize) -> Result<f64> {
    let p = distribution.get(target).ok_or_else(|| {
        TensorError::Contract(format!(
            "target {target} outside distribution of size {}",
            distribution.len()
        ))
    })?;
    Ok(-p.max(LOG_EPS).ln())
}

/// Plain matrix product of two rank-2 tensors.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape.len() != 2 || b.shape.len() != 2 || a.shape[1] != b.shape[0] {
        return Err(TensorError::Mismatch {
            op: "matmul",
            lhs: a.shape.clone(),
            rhs: b.shape.clone(),
        });
    }
    let (m, k, n) = (a.shape[0], a.shape[1], b.shape[1]);
    let mut out = vec![0.0; m * n];
    kernels::gemm(m, k, n, &a.data, false, &b.data, false, &mut out, false);
    Tensor::matrix(m, n, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_uniform_and_closed_form() {
        let s = softmax(&Tensor::vector(vec![0.0, 0.0, 0.0]), 0).unwrap();
        for v in s.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let s = softmax(&Tensor::vector(vec![0.0, 2f64.ln()]), 0).unwrap();
        assert!((s.data()[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((s.data()[1] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn softmax_shift_invariant() {
        let x = Tensor::vector(vec![0.3, -1.2, 2.5, 0.0]);
        let shifted = Tensor::vector(x.data().iter().map(|v| v + 17.25).collect());
        let a = softmax(&x, 0).unwrap();
        let b = softmax(&shifted, 0).unwrap();
        for (p, q) in a.data().iter().zip(b.data()) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_along_inner_and_outer_axes() {
        let x = Tensor::new(vec![2, 3], vec![1.0, 2.0, 3.0, -1.0, 0.0, 4.0]).unwrap();
        let rows = softmax(&x, 1).unwrap();
        for r in 0..2 {
            assert!((rows.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        let cols = softmax(&x, 0).unwrap();
        for c in 0..3 {
            assert!((cols.at(0, c) + cols.at(1, c) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn softmax_rejects_bad_axis() {
        let x = Tensor::vector(vec![1.0, 2.0]);
        assert_eq!(softmax(&x, 1).unwrap_err(), TensorError::Axis { axis: 1, rank: 1 });
    }

    #[test]
    fn cross_entropy_cases() {
        assert_eq!(cross_entropy_loss(&[0.0, 1.0, 0.0], 1).unwrap(), 0.0);
        let l = cross_entropy_loss(&[0.25; 4], 2).unwrap();
        assert!((l - 4f64.ln()).abs() < 1e-12);
        let l = cross_entropy_loss(&[1.0, 0.0], 1).unwrap();
        assert!((l - 27.631021115928547).abs() < 1e-9);
        assert!(cross_entropy_loss(&[1.0], 3).is_err());
    }

    #[test]
    fn matmul_identity() {
        let eye = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let a = Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(matmul(&eye, &a).unwrap(), a);
        assert!(matmul(&a, &eye).is_err());
    }

    #[test]
    fn tensor_rejects_inconsistent_shape() {
        assert!(Tensor::new(vec![2, 2], vec![1.0; 3]).is_err());
    }
}
