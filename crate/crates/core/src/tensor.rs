//! Dense f32 tensors and the shape specs models declare for them.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::model::ModelError;

/// One dimension of a declared tensor shape.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Dim {
    Fixed(usize),
    /// Named dimension resolved per call, e.g. a candidate-box count.
    Symbolic(String),
}

impl Dim {
    pub fn matches(&self, actual: usize) -> bool {
        match self {
            Dim::Fixed(n) => *n == actual,
            Dim::Symbolic(_) => true,
        }
    }

    pub fn fixed(&self) -> Option<usize> {
        match self {
            Dim::Fixed(n) => Some(*n),
            Dim::Symbolic(_) => None,
        }
    }
}

impl fmt::Display for Dim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Dim::Fixed(n) => write!(f, "{n}"),
            Dim::Symbolic(s) => f.write_str(s),
        }
    }
}

/// Name and shape of one model input or output. Elements are always f32.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TensorSpec {
    name: String,
    shape: Vec<Dim>,
}

impl TensorSpec {
    pub fn new(name: impl Into<String>, shape: Vec<Dim>) -> Result<Self, ModelError> {
        let name = name.into();
        if name.is_empty() {
            return Err(ModelError::InvalidSpec("tensor name is empty".into()));
        }
        if shape.is_empty() {
            return Err(ModelError::InvalidSpec(alloc::format!("tensor `{name}` has an empty shape")));
        }
        if shape.iter().any(|d| d.fixed() == Some(0)) {
            return Err(ModelError::InvalidSpec(alloc::format!(
                "tensor `{name}` has a zero-sized fixed dimension"
            )));
        }
        Ok(Self { name, shape })
    }

    /// Spec with every dimension fixed.
    pub fn fixed(name: impl Into<String>, dims: &[usize]) -> Result<Self, ModelError> {
        Self::new(name, dims.iter().map(|&d| Dim::Fixed(d)).collect())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn shape(&self) -> &[Dim] {
        &self.shape
    }

    /// Element count when every dimension is fixed.
    pub fn fixed_len(&self) -> Option<usize> {
        self.shape.iter().map(Dim::fixed).try_fold(1usize, |acc, d| Some(acc * d?))
    }

    pub fn accepts(&self, shape: &[usize]) -> bool {
        shape.len() == self.shape.len() && self.shape.iter().zip(shape).all(|(d, &n)| d.matches(n))
    }

    pub fn shape_string(&self) -> String {
        join_dims(self.shape.iter().map(|d| d.to_string()))
    }
}

pub(crate) fn join_dims(dims: impl Iterator<Item = String>) -> String {
    let parts: Vec<String> = dims.collect();
    parts.join("x")
}

/// Row-major f32 tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self, ModelError> {
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(ModelError::InvalidSpec(alloc::format!(
                "shape {} holds {len} values but {} were given",
                join_dims(shape.iter().map(|d| d.to_string())),
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Self { shape, data: alloc::vec![0.0; len] }
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

    pub fn shape_string(&self) -> String {
        join_dims(self.shape.iter().map(|d| d.to_string()))
    }
}

/// Tensors keyed by input/output name.
pub type NamedTensors = BTreeMap<String, Tensor>;
