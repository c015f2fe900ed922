//! Gesture classification with an open-set rejection gate.
//!
//! One forward pass of the classifier yields both the class logits and the
//! embedding tapped before the dense head. The embedding is compared with one
//! mean reference vector per class; the query is accepted only when its
//! nearest reference is strictly closer than that class's threshold. Accepted
//! queries take the classifier's argmax label, rejected ones become
//! [`GestureLabel::Unknown`].

use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::detector::{image_tensor, CroppedHand};
use crate::gesture::{Gesture, GestureLabel};
use crate::model::{ModelError, ModelHandle};
use crate::tensor::Tensor;
use crate::{CLASSIFIER_SIZE, NUM_CLASSES};

pub const EMBEDDING_OUTPUT: &str = "embedding";
pub const LOGITS_OUTPUT: &str = "logits";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ClassifierError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("classifier output contract violated: {0}")]
    OutputContract(String),
    #[error("no samples for class `{0}`")]
    MissingClass(Gesture),
    #[error("embedding has {actual} dimensions, expected {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("embedding is empty or has non-finite values")]
    InvalidEmbedding,
    #[error("threshold for `{class}` must be finite and nonnegative, got {value}")]
    InvalidThreshold { class: Gesture, value: f64 },
    #[error("threshold scale must be finite and nonnegative, got {0}")]
    InvalidScale(f64),
}

/// Similarity-network output vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    pub fn new(values: Vec<f64>) -> Result<Self, ClassifierError> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(ClassifierError::InvalidEmbedding);
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn distance(&self, other: &Embedding) -> f64 {
        euclidean(&self.0, &other.0)
    }
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    libm::sqrt(sq)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassScores {
    pub logits: [f32; NUM_CLASSES],
    pub argmax: Gesture,
}

impl ClassScores {
    /// Ties resolve to the lowest class index.
    pub fn from_logits(logits: [f32; NUM_CLASSES]) -> Self {
        let mut best = 0;
        for i in 1..NUM_CLASSES {
            if logits[i] > logits[best] {
                best = i;
            }
        }
        Self { logits, argmax: Gesture::ALL[best] }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceEntry {
    pub mean: Embedding,
    pub threshold: f64,
    pub sample_count: usize,
}

/// Per-class reference vectors with calibrated acceptance radii.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceSet {
    entries: [ReferenceEntry; NUM_CLASSES],
    threshold_scale: f64,
}

impl ReferenceSet {
    pub fn new(entries: [ReferenceEntry; NUM_CLASSES], threshold_scale: f64) -> Result<Self, ClassifierError> {
        let dim = entries[0].mean.dim();
        for (g, e) in Gesture::ALL.iter().zip(&entries) {
            if e.mean.dim() != dim {
                return Err(ClassifierError::DimensionMismatch { expected: dim, actual: e.mean.dim() });
            }
            if !(e.threshold.is_finite() && e.threshold >= 0.0) {
                return Err(ClassifierError::InvalidThreshold { class: *g, value: e.threshold });
            }
        }
        check_scale(threshold_scale)?;
        Ok(Self { entries, threshold_scale })
    }

    pub fn entry(&self, class: Gesture) -> &ReferenceEntry {
        &self.entries[class.index()]
    }

    pub fn entries(&self) -> &[ReferenceEntry; NUM_CLASSES] {
        &self.entries
    }

    pub fn dim(&self) -> usize {
        self.entries[0].mean.dim()
    }

    pub fn threshold_scale(&self) -> f64 {
        self.threshold_scale
    }

    /// Copy with a different threshold scale.
    pub fn with_scale(&self, scale: f64) -> Result<Self, ClassifierError> {
        check_scale(scale)?;
        Ok(Self { entries: self.entries.clone(), threshold_scale: scale })
    }

    pub fn effective_threshold(&self, class: Gesture) -> f64 {
        self.entries[class.index()].threshold * self.threshold_scale
    }

    pub fn effective_thresholds(&self) -> [f64; NUM_CLASSES] {
        Gesture::ALL.map(|g| self.effective_threshold(g))
    }

    /// Replaces the entries of every class that has samples with a mean and
    /// threshold computed from those samples alone. Other classes keep their
    /// current entry.
    pub fn rebuild_from(&self, samples: &ClassSamples) -> Result<Self, ClassifierError> {
        if samples.iter().all(Vec::is_empty) {
            return Err(ClassifierError::MissingClass(Gesture::Fist));
        }
        let mut entries = self.entries.clone();
        for (entry, class_samples) in entries.iter_mut().zip(samples) {
            if class_samples.is_empty() {
                continue;
            }
            let mean = mean_of(class_samples, self.dim())?;
            let threshold = class_samples.iter().map(|s| s.distance(&mean)).fold(0.0, f64::max);
            *entry = ReferenceEntry { mean, threshold, sample_count: class_samples.len() };
        }
        Self::new(entries, self.threshold_scale)
    }
}

fn check_scale(scale: f64) -> Result<(), ClassifierError> {
    if scale.is_finite() && scale >= 0.0 {
        Ok(())
    } else {
        Err(ClassifierError::InvalidScale(scale))
    }
}

/// Embeddings grouped by class, in class order.
pub type ClassSamples = [Vec<Embedding>; NUM_CLASSES];

/// Class-mean reference vectors before threshold calibration.
#[derive(Clone, Debug, PartialEq)]
pub struct References {
    pub means: [Embedding; NUM_CLASSES],
    pub sample_counts: [usize; NUM_CLASSES],
}

/// Coordinate-wise mean. Each coordinate is summed in sorted order so the
/// result does not depend on sample order.
fn mean_of(samples: &[Embedding], dim: usize) -> Result<Embedding, ClassifierError> {
    if let Some(bad) = samples.iter().find(|s| s.dim() != dim) {
        return Err(ClassifierError::DimensionMismatch { expected: dim, actual: bad.dim() });
    }
    let n = samples.len() as f64;
    let mut column = Vec::with_capacity(samples.len());
    let values = (0..dim)
        .map(|k| {
            column.clear();
            column.extend(samples.iter().map(|s| s.0[k]));
            column.sort_unstable_by(f64::total_cmp);
            column.iter().sum::<f64>() / n
        })
        .collect();
    Embedding::new(values)
}

pub fn build_references(samples: &ClassSamples) -> Result<References, ClassifierError> {
    let dim = samples
        .iter()
        .zip(Gesture::ALL)
        .find_map(|(s, _)| s.first().map(Embedding::dim))
        .ok_or(ClassifierError::MissingClass(Gesture::Fist))?;
    let mut means = Vec::with_capacity(NUM_CLASSES);
    for (class, class_samples) in Gesture::ALL.into_iter().zip(samples) {
        if class_samples.is_empty() {
            return Err(ClassifierError::MissingClass(class));
        }
        means.push(mean_of(class_samples, dim)?);
    }
    Ok(References {
        means: means.try_into().expect("one mean per class"),
        sample_counts: samples.each_ref().map(Vec::len),
    })
}

/// Sets each class threshold to the largest distance between that class's
/// calibration samples and its reference. The scale starts at 1.
pub fn calibrate_thresholds(references: References, calibration: &ClassSamples) -> Result<ReferenceSet, ClassifierError> {
    let mut thresholds = [0.0f64; NUM_CLASSES];
    for (i, class) in Gesture::ALL.into_iter().enumerate() {
        let samples = &calibration[i];
        if samples.is_empty() {
            return Err(ClassifierError::MissingClass(class));
        }
        let mean = &references.means[i];
        for s in samples {
            if s.dim() != mean.dim() {
                return Err(ClassifierError::DimensionMismatch { expected: mean.dim(), actual: s.dim() });
            }
            thresholds[i] = thresholds[i].max(s.distance(mean));
        }
    }
    let References { means, sample_counts } = references;
    let mut i = 0;
    let entries = means.map(|mean| {
        let e = ReferenceEntry { mean, threshold: thresholds[i], sample_count: sample_counts[i] };
        i += 1;
        e
    });
    ReferenceSet::new(entries, 1.0)
}

/// How an accepted embedding is labeled.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DecisionRule {
    /// Also reject when the nearest reference class differs from the argmax.
    pub strict_agreement: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GestureDecision {
    pub label: GestureLabel,
    pub classifier_label: Gesture,
    pub nearest: Gesture,
    pub nearest_distance: f64,
    pub accepted: bool,
    pub distances: [f64; NUM_CLASSES],
    pub effective_thresholds: [f64; NUM_CLASSES],
}

impl GestureDecision {
    /// Whether the nearest reference and the classifier named different classes.
    pub fn disagrees(&self) -> bool {
        self.nearest != self.classifier_label
    }
}

pub fn open_set_decide(embedding: &Embedding, scores: &ClassScores, refs: &ReferenceSet) -> GestureDecision {
    open_set_decide_with(embedding, scores, refs, DecisionRule::default())
}

/// # Panics
///
/// If the embedding and the references differ in dimension; callers check
/// this once when the model and references are loaded.
pub fn open_set_decide_with(
    embedding: &Embedding,
    scores: &ClassScores,
    refs: &ReferenceSet,
    rule: DecisionRule,
) -> GestureDecision {
    assert_eq!(embedding.dim(), refs.dim(), "embedding and reference dimensions differ");
    let distances = Gesture::ALL.map(|g| embedding.distance(&refs.entry(g).mean));
    let mut nearest = 0;
    for i in 1..NUM_CLASSES {
        if distances[i].partial_cmp(&distances[nearest]) == Some(Ordering::Less) {
            nearest = i;
        }
    }
    let nearest_class = Gesture::ALL[nearest];
    let effective_thresholds = refs.effective_thresholds();
    let accepted = distances[nearest] < effective_thresholds[nearest]
        && (!rule.strict_agreement || nearest_class == scores.argmax);
    GestureDecision {
        label: if accepted { GestureLabel::Known(scores.argmax) } else { GestureLabel::Unknown },
        classifier_label: scores.argmax,
        nearest: nearest_class,
        nearest_distance: distances[nearest],
        accepted,
        distances,
        effective_thresholds,
    }
}

/// Resizes a hand crop to the 1×70×70×3 classifier input.
pub fn preprocess_crop(crop: &CroppedHand) -> Tensor {
    image_tensor(&crop.pixels.resize_bilinear(CLASSIFIER_SIZE, CLASSIFIER_SIZE))
}

/// Runs the dual-output classifier once, returning the embedding tap and the
/// class scores.
pub fn embed_and_classify(tensor: Tensor, model: &ModelHandle) -> Result<(Embedding, ClassScores), ClassifierError> {
    let outputs = model.forward_single(tensor)?;
    let contract = |msg: String| ClassifierError::OutputContract(msg);
    let embedding = outputs
        .get(EMBEDDING_OUTPUT)
        .ok_or_else(|| contract(alloc::format!("missing output `{EMBEDDING_OUTPUT}`")))?;
    let logits = outputs
        .get(LOGITS_OUTPUT)
        .ok_or_else(|| contract(alloc::format!("missing output `{LOGITS_OUTPUT}`")))?;
    if !matches!(embedding.shape(), [1, _] | [_]) {
        return Err(contract(alloc::format!("embedding shape {} is not 1xD", embedding.shape_string())));
    }
    let logits: [f32; NUM_CLASSES] = logits
        .data()
        .try_into()
        .map_err(|_| contract(alloc::format!("logits shape {} is not 1x4", logits.shape_string())))?;
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(contract("non-finite logits".into()));
    }
    let embedding = Embedding::new(embedding.data().iter().map(|&v| v as f64).collect())
        .map_err(|_| contract("embedding is empty or non-finite".into()))?;
    Ok((embedding, ClassScores::from_logits(logits)))
}
