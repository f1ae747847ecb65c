use crate::error::{Error, Result};

/// Dense row-major tensor of f64 values. Rank 0 (scalar), 1 (vector) and 2
/// (matrix) cover everything the model needs; higher ranks are rejected at
/// construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.len() > 2 {
            return Err(Error::ShapeMismatch {
                op: "Tensor::new",
                detail: format!("rank {} not supported", shape.len()),
            });
        }
        if shape.contains(&0) {
            return Err(Error::ShapeMismatch {
                op: "Tensor::new",
                detail: format!("zero-sized dimension in {shape:?}"),
            });
        }
        let elems: usize = shape.iter().product();
        if elems != data.len() {
            return Err(Error::ShapeMismatch {
                op: "Tensor::new",
                detail: format!("shape {shape:?} wants {elems} elements, got {}", data.len()),
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn scalar(v: f64) -> Self {
        Tensor { shape: vec![], data: vec![v] }
    }

    pub fn vector(data: Vec<f64>) -> Result<Self> {
        let n = data.len();
        Tensor::new(vec![n], data)
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Tensor::new(vec![rows, cols], data)
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let elems: usize = shape.iter().product();
        Tensor::new(shape, vec![0.0; elems])
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

    pub fn elems(&self) -> usize {
        self.data.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.shape.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Scalar value; panics if the tensor is not rank 0. Use only after a
    /// shape check or on values produced by reductions.
    pub fn scalar_value(&self) -> f64 {
        assert!(self.is_scalar(), "scalar_value on shape {:?}", self.shape);
        self.data[0]
    }
}
