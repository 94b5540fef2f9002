use crate::error::{GpError, Result};

/// Row-major `n x d` matrix of input points.
#[derive(Debug, Clone, PartialEq)]
pub struct Inputs {
    data: Vec<f64>,
    dim: usize,
}

impl Inputs {
    pub fn new(data: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(GpError::invalid("input dimension must be at least 1"));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(GpError::invalid(format!(
                "{} values do not form rows of dimension {dim}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(GpError::invalid(format!(
                "non-finite input at row {}",
                pos / dim
            )));
        }
        Ok(Inputs { data, dim })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(1, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            if row.len() != dim {
                return Err(GpError::DimensionMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Inputs::new(data, dim)
    }

    /// One-dimensional inputs.
    pub fn from_scalars(xs: &[f64]) -> Result<Self> {
        Inputs::new(xs.to_vec(), 1)
    }

    pub fn empty(dim: usize) -> Self {
        Inputs {
            data: Vec::new(),
            dim: dim.max(1),
        }
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn select(&self, indices: &[usize]) -> Inputs {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Inputs {
            data,
            dim: self.dim,
        }
    }
}

/// Training inputs with their observed outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Inputs,
    pub outputs: Vec<f64>,
}

impl Dataset {
    pub fn new(inputs: Inputs, outputs: Vec<f64>) -> Result<Self> {
        if inputs.len() != outputs.len() {
            return Err(GpError::DimensionMismatch {
                expected: inputs.len(),
                found: outputs.len(),
            });
        }
        if let Some(i) = outputs.iter().position(|v| !v.is_finite()) {
            return Err(GpError::invalid(format!("non-finite output at row {i}")));
        }
        Ok(Dataset { inputs, outputs })
    }

    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.dim()
    }

    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            inputs: self.inputs.select(indices),
            outputs: indices.iter().map(|&i| self.outputs[i]).collect(),
        }
    }
}
