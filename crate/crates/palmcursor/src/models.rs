//! Model directory resolution and contract checks.
//!
//! A model directory holds either `detector.onnx` + `classifier.onnx`, or a
//! `stub.json` selecting built-in stand-ins:
//!
//! ```json
//! { "kind": "synthetic" }
//! { "kind": "projection", "seed": 7, "max_boxes": 1 }
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use palmcursor_core::classifier::{EMBEDDING_OUTPUT, LOGITS_OUTPUT};
use palmcursor_core::detector::{BOXES_OUTPUT, SCORES_OUTPUT};
use palmcursor_core::model::{ModelError, ModelHandle};
use palmcursor_core::stub::{make_stub, StubNetworkConfig};
use palmcursor_core::tensor::{Dim, TensorSpec};
use palmcursor_core::{synthetic, CLASSIFIER_SIZE, DETECTOR_SIZE, EMBEDDING_DIM, NUM_CLASSES};
use serde::{Deserialize, Serialize};

use crate::onnx::load_model;

pub const DETECTOR_FILE: &str = "detector.onnx";
pub const CLASSIFIER_FILE: &str = "classifier.onnx";
pub const STUB_FILE: &str = "stub.json";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StubKind {
    Synthetic,
    Projection {
        seed: u64,
        #[serde(default = "one")]
        max_boxes: usize,
    },
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug)]
pub struct ModelSet {
    pub detector: ModelHandle,
    pub classifier: ModelHandle,
}

impl ModelSet {
    pub fn synthetic() -> Self {
        Self { detector: synthetic::detector(), classifier: synthetic::classifier() }
    }

    /// Projection stubs with the production tensor contracts.
    pub fn projection(seed: u64, max_boxes: usize) -> Result<Self, ModelError> {
        let image = |side: usize| TensorSpec::fixed("image", &[1, side, side, 3]);
        let detector = make_stub(StubNetworkConfig {
            seed,
            input: image(DETECTOR_SIZE)?,
            outputs: vec![
                TensorSpec::fixed(BOXES_OUTPUT, &[max_boxes, 4])?,
                TensorSpec::fixed(SCORES_OUTPUT, &[max_boxes, 1])?,
            ],
            bias: false,
        })?;
        let classifier = make_stub(StubNetworkConfig {
            seed: seed.wrapping_add(1),
            input: image(CLASSIFIER_SIZE)?,
            outputs: vec![
                TensorSpec::fixed(EMBEDDING_OUTPUT, &[1, EMBEDDING_DIM])?,
                TensorSpec::fixed(LOGITS_OUTPUT, &[1, NUM_CLASSES])?,
            ],
            bias: false,
        })?;
        Ok(Self { detector, classifier })
    }

    /// Loads and validates the models in `dir`.
    pub fn load(dir: &Path) -> Result<Self, ModelError> {
        let stub = dir.join(STUB_FILE);
        let set = if stub.is_file() {
            let text = fs::read_to_string(&stub).map_err(|e| malformed(&stub, e))?;
            match serde_json::from_str::<StubKind>(&text).map_err(|e| malformed(&stub, e))? {
                StubKind::Synthetic => Self::synthetic(),
                StubKind::Projection { seed, max_boxes } => Self::projection(seed, max_boxes)?,
            }
        } else {
            Self { detector: load_model(&dir.join(DETECTOR_FILE))?, classifier: load_model(&dir.join(CLASSIFIER_FILE))? }
        };
        validate_detector(&set.detector).map_err(|e| in_file(e, dir.join(DETECTOR_FILE)))?;
        validate_classifier(&set.classifier).map_err(|e| in_file(e, dir.join(CLASSIFIER_FILE)))?;
        Ok(set)
    }
}

fn malformed(path: &Path, e: impl std::fmt::Display) -> ModelError {
    ModelError::MalformedModel { path: path.display().to_string(), reason: e.to_string() }
}

fn in_file(e: ModelError, path: PathBuf) -> ModelError {
    match e {
        ModelError::OutputContract(reason) => malformed(&path, reason),
        other => other,
    }
}

fn single_input(model: &ModelHandle, side: usize) -> Result<(), ModelError> {
    match model.inputs() {
        [spec] if spec.accepts(&[1, side, side, 3]) => Ok(()),
        specs => Err(ModelError::OutputContract(format!(
            "expected one 1x{side}x{side}x3 input, model declares {:?}",
            specs.iter().map(TensorSpec::shape_string).collect::<Vec<_>>()
        ))),
    }
}

fn output<'a>(model: &'a ModelHandle, name: &str) -> Result<&'a TensorSpec, ModelError> {
    model.output(name).ok_or_else(|| ModelError::OutputContract(format!("no output named `{name}`")))
}

fn last_dim_is(spec: &TensorSpec, n: usize) -> bool {
    spec.shape().last() == Some(&Dim::Fixed(n))
}

/// Checks the 1×300×300×3 → boxes N×4, scores N×1 contract.
pub fn validate_detector(model: &ModelHandle) -> Result<(), ModelError> {
    single_input(model, DETECTOR_SIZE)?;
    let boxes = output(model, BOXES_OUTPUT)?;
    let scores = output(model, SCORES_OUTPUT)?;
    if !last_dim_is(boxes, 4) {
        return Err(ModelError::OutputContract(format!("boxes shape {} is not Nx4", boxes.shape_string())));
    }
    if scores.shape().len() > 3 {
        return Err(ModelError::OutputContract(format!("scores shape {} is not Nx1", scores.shape_string())));
    }
    Ok(())
}

/// Checks the 1×70×70×3 → embedding 1×1280, logits 1×4 contract.
pub fn validate_classifier(model: &ModelHandle) -> Result<(), ModelError> {
    single_input(model, CLASSIFIER_SIZE)?;
    let embedding = output(model, EMBEDDING_OUTPUT)?;
    let logits = output(model, LOGITS_OUTPUT)?;
    if !embedding.accepts(&[1, EMBEDDING_DIM]) {
        return Err(ModelError::OutputContract(format!(
            "embedding shape {} is not 1x{EMBEDDING_DIM}",
            embedding.shape_string()
        )));
    }
    if !logits.accepts(&[1, NUM_CLASSES]) {
        return Err(ModelError::OutputContract(format!("logits shape {} is not 1x{NUM_CLASSES}", logits.shape_string())));
    }
    Ok(())
}

/// Writes a `stub.json` model directory.
pub fn write_stub_dir(dir: &Path, kind: &StubKind) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(STUB_FILE), serde_json::to_string_pretty(kind)? + "\n")
}
