//! Color-keyed stand-ins for the detector and classifier.
//!
//! Synthetic scenes draw the "hand" as a solid square on a dark background,
//! its color naming the gesture ([`PALETTE`]) or an untrained one
//! ([`UNKNOWN_COLOR`]). The detector boxes every bright pixel; the classifier
//! tiles the crop's mean color into the embedding and scores each class by
//! closeness to its palette color. Both are cheap and exactly traceable by
//! hand, which makes them the models behind replay goldens and throughput
//! checks.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::classifier::{Embedding, ReferenceEntry, ReferenceSet, EMBEDDING_OUTPUT, LOGITS_OUTPUT};
use crate::detector::{BOXES_OUTPUT, SCORES_OUTPUT};
use crate::gesture::Gesture;
use crate::model::{Backend, ModelError, ModelHandle};
use crate::tensor::{Dim, NamedTensors, Tensor, TensorSpec};
use crate::{CLASSIFIER_SIZE, DETECTOR_SIZE, EMBEDDING_DIM, NUM_CLASSES};

/// Hand colors in class order: fist, palm, point left, point right.
pub const PALETTE: [[u8; 3]; NUM_CLASSES] = [[255, 0, 0], [0, 255, 0], [0, 0, 255], [255, 255, 0]];
/// Color of a hand pose outside the four classes.
pub const UNKNOWN_COLOR: [u8; 3] = [255, 255, 255];
/// Score the synthetic detector gives its single box.
pub const DETECTION_SCORE: f32 = 0.95;
/// A pixel is foreground when any channel exceeds this.
pub const FOREGROUND_LEVEL: f32 = 0.5;

pub fn palette_color(g: Gesture) -> [u8; 3] {
    PALETTE[g.index()]
}

struct Detector {
    inputs: Vec<TensorSpec>,
    outputs: Vec<TensorSpec>,
}

struct Classifier {
    inputs: Vec<TensorSpec>,
    outputs: Vec<TensorSpec>,
}

fn metadata(name: &str) -> BTreeMap<String, String> {
    let mut m = BTreeMap::new();
    m.insert("model_name".into(), name.into());
    m.insert("parameter_count".into(), "0".into());
    m
}

pub fn detector() -> ModelHandle {
    let n = || Dim::Symbolic("N".into());
    ModelHandle::new(Detector {
        inputs: vec![TensorSpec::fixed("image", &[1, DETECTOR_SIZE, DETECTOR_SIZE, 3]).expect("valid spec")],
        outputs: vec![
            TensorSpec::new(BOXES_OUTPUT, vec![n(), Dim::Fixed(4)]).expect("valid spec"),
            TensorSpec::new(SCORES_OUTPUT, vec![n(), Dim::Fixed(1)]).expect("valid spec"),
        ],
    })
}

pub fn classifier() -> ModelHandle {
    ModelHandle::new(Classifier {
        inputs: vec![TensorSpec::fixed("image", &[1, CLASSIFIER_SIZE, CLASSIFIER_SIZE, 3]).expect("valid spec")],
        outputs: vec![
            TensorSpec::fixed(EMBEDDING_OUTPUT, &[1, EMBEDDING_DIM]).expect("valid spec"),
            TensorSpec::fixed(LOGITS_OUTPUT, &[1, NUM_CLASSES]).expect("valid spec"),
        ],
    })
}

impl Backend for Detector {
    fn inputs(&self) -> &[TensorSpec] {
        &self.inputs
    }

    fn outputs(&self) -> &[TensorSpec] {
        &self.outputs
    }

    fn metadata(&self) -> BTreeMap<String, String> {
        metadata("synthetic-detector")
    }

    fn run(&self, inputs: &NamedTensors) -> Result<NamedTensors, ModelError> {
        let px = inputs["image"].data();
        let mut bounds: Option<(usize, usize, usize, usize)> = None;
        for (i, p) in px.chunks_exact(3).enumerate() {
            if p.iter().all(|&v| v <= FOREGROUND_LEVEL) {
                continue;
            }
            let (x, y) = (i % DETECTOR_SIZE, i / DETECTOR_SIZE);
            bounds = Some(match bounds {
                None => (x, y, x, y),
                Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
            });
        }
        let side = DETECTOR_SIZE as f32;
        let (boxes, scores) = match bounds {
            None => (Tensor::zeros(vec![0, 4]), Tensor::zeros(vec![0, 1])),
            Some((x0, y0, x1, y1)) => (
                Tensor::new(
                    vec![1, 4],
                    vec![x0 as f32 / side, y0 as f32 / side, (x1 + 1) as f32 / side, (y1 + 1) as f32 / side],
                )?,
                Tensor::new(vec![1, 1], vec![DETECTION_SCORE])?,
            ),
        };
        let mut out = NamedTensors::new();
        out.insert(BOXES_OUTPUT.into(), boxes);
        out.insert(SCORES_OUTPUT.into(), scores);
        Ok(out)
    }
}

impl Backend for Classifier {
    fn inputs(&self) -> &[TensorSpec] {
        &self.inputs
    }

    fn outputs(&self) -> &[TensorSpec] {
        &self.outputs
    }

    fn metadata(&self) -> BTreeMap<String, String> {
        metadata("synthetic-classifier")
    }

    fn run(&self, inputs: &NamedTensors) -> Result<NamedTensors, ModelError> {
        let px = inputs["image"].data();
        let mut mean = [0.0f64; 3];
        for p in px.chunks_exact(3) {
            for c in 0..3 {
                mean[c] += p[c] as f64;
            }
        }
        let n = (px.len() / 3) as f64;
        let mean = mean.map(|s| s / n);
        let embedding: Vec<f32> = (0..EMBEDDING_DIM).map(|i| mean[i % 3] as f32).collect();
        let logits: Vec<f32> = PALETTE
            .iter()
            .map(|rgb| {
                let d2: f64 = (0..3).map(|c| { let d = mean[c] - rgb[c] as f64 / 255.0; d * d }).sum();
                (-10.0 * d2) as f32
            })
            .collect();
        let mut out = NamedTensors::new();
        out.insert(EMBEDDING_OUTPUT.into(), Tensor::new(vec![1, EMBEDDING_DIM], embedding)?);
        out.insert(LOGITS_OUTPUT.into(), Tensor::new(vec![1, NUM_CLASSES], logits)?);
        Ok(out)
    }
}

/// The embedding the synthetic classifier produces for a solid `rgb` crop.
pub fn embedding_for(rgb: [u8; 3]) -> Embedding {
    let c = rgb.map(|v| (v as f32 / 255.0) as f64);
    Embedding::new((0..EMBEDDING_DIM).map(|i| c[i % 3]).collect()).expect("finite")
}

/// References centered on the palette colors, all with the same threshold.
pub fn reference_set(threshold: f64) -> ReferenceSet {
    let entries = Gesture::ALL.map(|g| ReferenceEntry {
        mean: embedding_for(palette_color(g)),
        threshold,
        sample_count: 1,
    });
    ReferenceSet::new(entries, 1.0).expect("valid synthetic references")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{embed_and_classify, open_set_decide, preprocess_crop};
    use crate::detector::{crop_hand, detect_hand, preprocess_frame, to_detector_space, BoxRect};
    use crate::gesture::GestureLabel;
    use crate::image::{Frame, RgbImage};

    fn scene(color: Option<[u8; 3]>) -> Frame {
        let mut img = RgbImage::filled(300, 300, [10, 10, 10]).unwrap();
        if let Some(c) = color {
            img.fill_rect(100, 60, 50, 40, c);
        }
        Frame::new(img, 1, 0)
    }

    fn classify(frame: &Frame) -> Option<GestureLabel> {
        let det = detect_hand(preprocess_frame(frame), &detector(), 0.5).unwrap()?;
        assert_eq!(det.bbox, BoxRect::new(100, 60, 50, 40));
        let crop = crop_hand(&to_detector_space(frame), &det).unwrap();
        let (e, s) = embed_and_classify(preprocess_crop(&crop), &classifier()).unwrap();
        Some(open_set_decide(&e, &s, &reference_set(1.0)).label)
    }

    #[test]
    fn empty_scene_has_no_hand() {
        assert_eq!(classify(&scene(None)), None);
    }

    #[test]
    fn palette_colors_classify_to_their_gesture() {
        for g in Gesture::ALL {
            assert_eq!(classify(&scene(Some(palette_color(g)))), Some(GestureLabel::Known(g)));
        }
        assert_eq!(classify(&scene(Some(UNKNOWN_COLOR))), Some(GestureLabel::Unknown));
    }
}
