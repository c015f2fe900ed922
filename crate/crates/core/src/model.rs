//! Backend-neutral model handle.
//!
//! A [`ModelHandle`] wraps any [`Backend`] and enforces the declared tensor
//! specs on every forward pass, in both directions.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::sync::Arc;
use core::fmt;

use crate::tensor::{NamedTensors, TensorSpec};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("model file not found: {0}")]
    FileMissing(String),
    #[error("malformed model {path}: {reason}")]
    MalformedModel { path: String, reason: String },
    #[error("unsupported operator `{operator}` in {path}")]
    UnsupportedOperator { path: String, operator: String },
    #[error("invalid tensor spec: {0}")]
    InvalidSpec(String),
    #[error("shape mismatch for `{name}`: expected {expected}, got {actual}")]
    ShapeMismatch { name: String, expected: String, actual: String },
    #[error("missing input tensor `{0}`")]
    MissingInput(String),
    #[error("unexpected input tensor `{0}`")]
    UnexpectedInput(String),
    #[error("model output contract violated: {0}")]
    OutputContract(String),
    #[error("backend failure: {0}")]
    Backend(String),
}

/// An inference engine behind a [`ModelHandle`].
///
/// Implementations must be pure for a fixed instance: identical inputs give
/// identical outputs.
pub trait Backend: Send + Sync {
    fn inputs(&self) -> &[TensorSpec];
    fn outputs(&self) -> &[TensorSpec];
    fn metadata(&self) -> BTreeMap<String, String> {
        BTreeMap::new()
    }
    /// Runs one pass. Inputs have already been validated against [`Backend::inputs`].
    fn run(&self, inputs: &NamedTensors) -> Result<NamedTensors, ModelError>;
}

/// Shareable, immutable handle to a loaded model.
#[derive(Clone)]
pub struct ModelHandle {
    backend: Arc<dyn Backend>,
    metadata: BTreeMap<String, String>,
}

impl fmt::Debug for ModelHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelHandle")
            .field("inputs", &self.backend.inputs())
            .field("outputs", &self.backend.outputs())
            .field("metadata", &self.metadata)
            .finish()
    }
}

impl ModelHandle {
    pub fn new(backend: impl Backend + 'static) -> Self {
        Self::from_arc(Arc::new(backend))
    }

    pub fn from_arc(backend: Arc<dyn Backend>) -> Self {
        let metadata = backend.metadata();
        Self { backend, metadata }
    }

    pub fn inputs(&self) -> &[TensorSpec] {
        self.backend.inputs()
    }

    pub fn outputs(&self) -> &[TensorSpec] {
        self.backend.outputs()
    }

    pub fn metadata(&self) -> &BTreeMap<String, String> {
        &self.metadata
    }

    pub fn input(&self, name: &str) -> Option<&TensorSpec> {
        self.inputs().iter().find(|s| s.name() == name)
    }

    pub fn output(&self, name: &str) -> Option<&TensorSpec> {
        self.outputs().iter().find(|s| s.name() == name)
    }

    /// Runs a forward pass, checking inputs before and outputs after.
    pub fn forward(&self, inputs: &NamedTensors) -> Result<NamedTensors, ModelError> {
        for spec in self.inputs() {
            let tensor = inputs
                .get(spec.name())
                .ok_or_else(|| ModelError::MissingInput(spec.name().into()))?;
            if !spec.accepts(tensor.shape()) {
                return Err(ModelError::ShapeMismatch {
                    name: spec.name().into(),
                    expected: spec.shape_string(),
                    actual: tensor.shape_string(),
                });
            }
        }
        if let Some(extra) = inputs.keys().find(|k| self.input(k).is_none()) {
            return Err(ModelError::UnexpectedInput(extra.clone()));
        }

        let outputs = self.backend.run(inputs)?;
        if outputs.len() != self.outputs().len() {
            return Err(ModelError::OutputContract(alloc::format!(
                "expected {} outputs, backend produced {}",
                self.outputs().len(),
                outputs.len()
            )));
        }
        for spec in self.outputs() {
            let tensor = outputs.get(spec.name()).ok_or_else(|| {
                ModelError::OutputContract(alloc::format!("output `{}` missing", spec.name()))
            })?;
            if !spec.accepts(tensor.shape()) {
                return Err(ModelError::ShapeMismatch {
                    name: spec.name().into(),
                    expected: spec.shape_string(),
                    actual: tensor.shape_string(),
                });
            }
        }
        Ok(outputs)
    }

    /// Convenience for single-input models.
    pub fn forward_single(&self, tensor: crate::tensor::Tensor) -> Result<NamedTensors, ModelError> {
        let name = match self.inputs() {
            [only] => only.name().into(),
            specs => {
                return Err(ModelError::InvalidSpec(alloc::format!(
                    "model declares {} inputs, expected exactly one",
                    specs.len()
                )))
            }
        };
        let mut inputs = NamedTensors::new();
        inputs.insert(name, tensor);
        self.forward(&inputs)
    }
}
