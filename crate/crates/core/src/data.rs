use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Paired regression samples, one row per sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Samples {
    pub inputs: Tensor,
    pub targets: Tensor,
}

impl Samples {
    pub fn new(inputs: Tensor, targets: Tensor) -> Result<Self> {
        if inputs.shape().len() != 2 || targets.shape().len() != 2 {
            return Err(Error::shape("samples", "rank-2 tensors", (inputs.shape(), targets.shape())));
        }
        if inputs.rows() != targets.rows() {
            return Err(Error::shape("samples", inputs.rows(), targets.rows()));
        }
        Ok(Self { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            inputs: self.inputs.select_rows(idx),
            targets: self.targets.select_rows(idx),
        }
    }

    /// Rows `start..end`.
    pub fn slice(&self, start: usize, end: usize) -> Self {
        let idx: Vec<usize> = (start..end).collect();
        self.select(&idx)
    }
}
