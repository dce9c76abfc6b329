use crate::tensor::Tensor;
use crate::{Error, Result};

/// Token embeddings with an explicit `rows × cols × channels` layout.
///
/// Token `i` sits at row `i / cols`, column `i % cols`.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenGrid {
    tensor: Tensor,
}

impl TokenGrid {
    pub fn new(rows: usize, cols: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        Ok(Self {
            tensor: Tensor::new([rows, cols, channels], data)?,
        })
    }

    /// Wraps an `[H, W, C]` tensor.
    pub fn from_tensor(tensor: Tensor) -> Result<Self> {
        tensor.dims3("TokenGrid")?;
        Ok(Self { tensor })
    }

    /// Re-attaches a layout to an `[N, C]` token matrix.
    pub fn from_tokens(rows: usize, cols: usize, tokens: Tensor) -> Result<Self> {
        let (n, c) = tokens.as_matrix();
        if n != rows * cols {
            return Err(Error::shape(
                "TokenGrid::from_tokens",
                format!("{n} tokens cannot fill a {rows}x{cols} grid"),
            ));
        }
        Ok(Self {
            tensor: tokens.reshape([rows, cols, c])?,
        })
    }

    pub fn rows(&self) -> usize {
        self.tensor.shape()[0]
    }

    pub fn cols(&self) -> usize {
        self.tensor.shape()[1]
    }

    pub fn channels(&self) -> usize {
        self.tensor.shape()[2]
    }

    pub fn num_tokens(&self) -> usize {
        self.rows() * self.cols()
    }

    pub fn token(&self, i: usize) -> &[f32] {
        self.tensor.row(i)
    }

    pub fn data(&self) -> &[f32] {
        self.tensor.data()
    }

    pub fn as_tensor(&self) -> &Tensor {
        &self.tensor
    }

    pub fn into_tensor(self) -> Tensor {
        self.tensor
    }

    /// Flattens to an `[N, C]` token matrix.
    pub fn to_tokens(&self) -> Tensor {
        Tensor::from_parts(
            vec![self.num_tokens(), self.channels()],
            self.data().to_vec(),
        )
    }
}
