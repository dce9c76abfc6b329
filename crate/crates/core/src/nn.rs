//! Parameterized building blocks and the weight-source abstraction used to
//! construct them, either from an initializer or from stored tensors.

use crate::tensor::{self, Tensor};
use crate::Result;

pub const LAYERNORM_EPS: f32 = 1e-6;

/// How a freshly generated parameter should be initialized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Normal with the given std, truncated at two standard deviations.
    TruncNormal {
        std: f32,
    },
    /// Normal with std `sqrt(2 / fan_in)`.
    FanIn {
        fan_in: usize,
    },
    Zeros,
    Ones,
}

/// Supplies named parameter tensors during model construction.
pub trait WeightSource {
    fn tensor(&mut self, name: &str, shape: &[usize], init: Init) -> Result<Tensor>;
}

/// Visitor over `(name, tensor)` pairs in construction order.
pub type Visitor<'a> = dyn FnMut(String, &Tensor) + 'a;

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    /// `[in, out]`
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    pub fn build(
        src: &mut dyn WeightSource,
        prefix: &str,
        d_in: usize,
        d_out: usize,
    ) -> Result<Self> {
        Ok(Self {
            weight: src.tensor(
                &format!("{prefix}.weight"),
                &[d_in, d_out],
                Init::TruncNormal { std: 0.02 },
            )?,
            bias: src.tensor(&format!("{prefix}.bias"), &[d_out], Init::Zeros)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        tensor::linear(x, &self.weight, Some(&self.bias))
    }

    pub fn visit(&self, prefix: &str, f: &mut Visitor<'_>) {
        f(format!("{prefix}.weight"), &self.weight);
        f(format!("{prefix}.bias"), &self.bias);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gamma: Tensor,
    pub beta: Tensor,
}

impl LayerNorm {
    pub fn build(src: &mut dyn WeightSource, prefix: &str, dim: usize) -> Result<Self> {
        Ok(Self {
            gamma: src.tensor(&format!("{prefix}.gamma"), &[dim], Init::Ones)?,
            beta: src.tensor(&format!("{prefix}.beta"), &[dim], Init::Zeros)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        tensor::layernorm(x, &self.gamma, &self.beta, LAYERNORM_EPS)
    }

    pub fn visit(&self, prefix: &str, f: &mut Visitor<'_>) {
        f(format!("{prefix}.gamma"), &self.gamma);
        f(format!("{prefix}.beta"), &self.beta);
    }
}

/// Dense `k × k` convolution with bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    /// `[k, k, C_in, C_out]`
    pub weight: Tensor,
    pub bias: Tensor,
    pub stride: usize,
    pub padding: usize,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn build(
        src: &mut dyn WeightSource,
        prefix: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        Ok(Self {
            weight: src.tensor(
                &format!("{prefix}.weight"),
                &[kernel, kernel, c_in, c_out],
                Init::FanIn {
                    fan_in: kernel * kernel * c_in,
                },
            )?,
            bias: src.tensor(&format!("{prefix}.bias"), &[c_out], Init::Zeros)?,
            stride,
            padding,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        tensor::conv2d(x, &self.weight, Some(&self.bias), self.stride, self.padding)
    }

    pub fn visit(&self, prefix: &str, f: &mut Visitor<'_>) {
        f(format!("{prefix}.weight"), &self.weight);
        f(format!("{prefix}.bias"), &self.bias);
    }
}
