//! Minimal dense tensor engine.
//!
//! Tensors are row-major `f32` buffers. Spatial tensors use `[H, W, C]`
//! layout and token matrices use `[N, C]`. Every op that performs
//! multiply-accumulates reports them to [`MacCounter`].

pub(crate) mod kernels;
mod mac;
mod ops;

pub(crate) use mac::record_as as record_macs_as;
pub use mac::{with_mac_kind, MacCounter, MacKind};
pub use ops::{
    add, avgpool2d, bilinear_resize, concat_channels, conv2d, depthwise_conv2d, gelu, layernorm,
    linear, matmul, matmul_transposed, relu, softmax_rows,
};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: impl Into<Vec<usize>>, data: Vec<f32>) -> Result<Self> {
        let shape = shape.into();
        let n = checked_numel(&shape)?;
        if n != data.len() {
            return Err(Error::shape(
                "Tensor::new",
                format!("shape {shape:?} needs {n} values, got {}", data.len()),
            ));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Result<Self> {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: impl Into<Vec<usize>>, value: f32) -> Result<Self> {
        let shape = shape.into();
        let n = checked_numel(&shape)?;
        Ok(Self {
            shape,
            data: vec![value; n],
        })
    }

    /// Builds a tensor whose element at flat index `i` is `f(i)`.
    pub fn from_fn(shape: impl Into<Vec<usize>>, f: impl FnMut(usize) -> f32) -> Result<Self> {
        let shape = shape.into();
        let n = checked_numel(&shape)?;
        Ok(Self {
            shape,
            data: (0..n).map(f).collect(),
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn reshape(self, shape: impl Into<Vec<usize>>) -> Result<Self> {
        Self::new(shape, self.data)
    }

    /// Views the tensor as a matrix whose columns are the last dimension.
    pub fn as_matrix(&self) -> (usize, usize) {
        let cols = *self.shape.last().expect("tensor rank >= 1");
        (self.data.len() / cols, cols)
    }

    /// Row `i` of the matrix view.
    pub fn row(&self, i: usize) -> &[f32] {
        let (_, c) = self.as_matrix();
        &self.data[i * c..(i + 1) * c]
    }

    pub(crate) fn dims2(&self, op: &'static str) -> Result<(usize, usize)> {
        match self.shape[..] {
            [a, b] => Ok((a, b)),
            _ => Err(Error::shape(
                op,
                format!("expected rank 2, got {:?}", self.shape),
            )),
        }
    }

    pub(crate) fn dims3(&self, op: &'static str) -> Result<(usize, usize, usize)> {
        match self.shape[..] {
            [a, b, c] => Ok((a, b, c)),
            _ => Err(Error::shape(
                op,
                format!("expected rank 3, got {:?}", self.shape),
            )),
        }
    }

    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f32>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f32 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max)
    }
}

fn checked_numel(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() {
        return Err(Error::shape("Tensor", "rank must be at least 1"));
    }
    if shape.contains(&0) {
        return Err(Error::shape(
            "Tensor",
            format!("zero-sized dimension in {shape:?}"),
        ));
    }
    shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::shape("Tensor", format!("element count overflows for {shape:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_mismatched_data() {
        assert!(Tensor::new([2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::new([2, 0], vec![]).is_err());
        assert!(Tensor::new(Vec::<usize>::new(), vec![1.0]).is_err());
    }

    #[test]
    fn matrix_view() {
        let t = Tensor::from_fn([2, 2, 3], |i| i as f32).unwrap();
        assert_eq!(t.as_matrix(), (4, 3));
        assert_eq!(t.row(1), &[3.0, 4.0, 5.0]);
    }
}
