//! Allocation-only core of the palmcursor gesture controller.
//!
//! Everything in this crate is a pure function of its inputs: image
//! resampling, hand-box selection, the embedding-distance open-set gate,
//! the on/off cursor state machine and the confusion-matrix arithmetic.
//! File formats, model loading, capture and the OS cursor live in the
//! `palmcursor` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod classifier;
pub mod cursor;
pub mod detector;
pub mod eval;
pub mod gesture;
pub mod image;
pub mod model;
pub mod stats;
pub mod stub;
pub mod synthetic;
pub mod tensor;

pub use classifier::{
    build_references, calibrate_thresholds, embed_and_classify, open_set_decide, preprocess_crop,
    ClassScores, ClassifierError, DecisionRule, Embedding, GestureDecision, ReferenceEntry,
    ReferenceSet,
};
pub use cursor::{
    map_coordinate, smooth, ControllerConfig, ControllerError, ControllerState, CursorCommand,
    Mode, ScreenGeometry,
};
pub use detector::{crop_hand, detect_hand, preprocess_frame, BoxRect, CroppedHand, Detection, DetectorError};
pub use eval::{ConfusionMatrix, ControlMode, EvalError, NormalizedMatrix};
pub use gesture::{Gesture, GestureLabel};
pub use image::{Frame, FloatImage, RgbImage};
pub use model::{Backend, ModelError, ModelHandle};
pub use stats::{measure_fps, FpsStats};
pub use stub::{make_stub, StubNetworkConfig};
pub use tensor::{Dim, NamedTensors, Tensor, TensorSpec};

/// Side length of the square detector input, in pixels.
pub const DETECTOR_SIZE: usize = 300;
/// Side length of the square classifier input, in pixels.
pub const CLASSIFIER_SIZE: usize = 70;
/// Width of the similarity-network embedding.
pub const EMBEDDING_DIM: usize = 1280;
/// Number of defined gesture classes.
pub const NUM_CLASSES: usize = 4;
