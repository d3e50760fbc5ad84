use serde::{Deserialize, Serialize};

use crate::{shape_err, NnError, Result};

/// Row-major `f64` array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(shape_err("tensor", format!("shape {shape:?} needs {len} values, got {}", data.len())));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Self { shape, data: vec![0.0; len] }
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

    /// Size of the leading (batch) axis.
    pub fn batch(&self) -> usize {
        self.shape.first().copied().unwrap_or(0)
    }

    /// Elements per leading-axis entry.
    pub fn row_len(&self) -> usize {
        self.shape.iter().skip(1).product()
    }

    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self> {
        let len: usize = shape.iter().product();
        if len != self.data.len() {
            return Err(shape_err("reshape", format!("{:?} -> {shape:?}", self.shape)));
        }
        self.shape = shape;
        Ok(self)
    }

    /// Rows `idx` of the leading axis, in the given order.
    pub fn gather_rows(&self, idx: &[usize]) -> Result<Self> {
        let row = self.row_len();
        let mut data = Vec::with_capacity(idx.len() * row);
        for &i in idx {
            if i >= self.batch() {
                return Err(NnError::InvalidArgument(format!("row {i} out of {}", self.batch())));
            }
            data.extend_from_slice(&self.data[i * row..(i + 1) * row]);
        }
        let mut shape = self.shape.clone();
        shape[0] = idx.len();
        Ok(Self { shape, data })
    }

    /// Stacks equally shaped samples along a new leading axis.
    pub fn stack(samples: &[Tensor]) -> Result<Self> {
        let first = samples.first().ok_or_else(|| NnError::InvalidArgument("nothing to stack".into()))?;
        let mut data = Vec::with_capacity(samples.len() * first.len());
        for s in samples {
            if s.shape != first.shape {
                return Err(shape_err("stack", format!("{:?} vs {:?}", s.shape, first.shape)));
            }
            data.extend_from_slice(&s.data);
        }
        let mut shape = vec![samples.len()];
        shape.extend_from_slice(&first.shape);
        Ok(Self { shape, data })
    }

    /// Sample `i` of the leading axis with that axis removed.
    pub fn row(&self, i: usize) -> Result<Self> {
        let mut t = self.gather_rows(&[i])?;
        t.shape.remove(0);
        Ok(t)
    }
}
