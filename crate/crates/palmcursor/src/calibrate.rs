//! Building a reference set from a labeled dataset.
//!
//! Dataset images are hand crops, so they go to the classifier whole. Class
//! means use every split; thresholds use the validation and test splits
//! only.

use palmcursor_core::classifier::{
    build_references, calibrate_thresholds, embed_and_classify, preprocess_crop, ClassSamples, ClassScores,
    ClassifierError, Embedding, ReferenceSet,
};
use palmcursor_core::{CroppedHand, Gesture, ModelHandle};

use crate::dataset::{LabeledDataset, Sample, Split};
use crate::recording::{read_image, RecordingError};

#[derive(Debug, thiserror::Error)]
pub enum CalibrationError {
    #[error(transparent)]
    Image(#[from] RecordingError),
    #[error("{path}: {source}")]
    Classifier { path: String, source: ClassifierError },
    #[error("no {splits} samples for class `{class}`")]
    MissingClass { class: Gesture, splits: &'static str },
    #[error(transparent)]
    References(ClassifierError),
}

/// Embedding and class scores of one dataset image.
pub fn embed_sample(sample: &Sample, classifier: &ModelHandle) -> Result<(Embedding, ClassScores), CalibrationError> {
    let image = read_image(&sample.path)?;
    let tensor = preprocess_crop(&CroppedHand::whole(&image));
    embed_and_classify(tensor, classifier)
        .map_err(|source| CalibrationError::Classifier { path: sample.path.display().to_string(), source })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Calibration {
    pub references: ReferenceSet,
    /// Samples behind each class mean.
    pub mean_samples: [usize; 4],
    /// Samples behind each threshold.
    pub threshold_samples: [usize; 4],
}

pub fn calibrate(dataset: &LabeledDataset, classifier: &ModelHandle) -> Result<Calibration, CalibrationError> {
    let mut all: ClassSamples = Default::default();
    let mut held_out: ClassSamples = Default::default();
    for sample in &dataset.samples {
        let (embedding, _) = embed_sample(sample, classifier)?;
        if sample.split != Split::Train {
            held_out[sample.class.index()].push(embedding.clone());
        }
        all[sample.class.index()].push(embedding);
    }
    for g in Gesture::ALL {
        if all[g.index()].is_empty() {
            return Err(CalibrationError::MissingClass { class: g, splits: "dataset" });
        }
        if held_out[g.index()].is_empty() {
            return Err(CalibrationError::MissingClass { class: g, splits: "val/test" });
        }
    }
    let references = build_references(&all).map_err(CalibrationError::References)?;
    let references = calibrate_thresholds(references, &held_out).map_err(CalibrationError::References)?;
    Ok(Calibration {
        references,
        mean_samples: all.each_ref().map(Vec::len),
        threshold_samples: held_out.each_ref().map(Vec::len),
    })
}
