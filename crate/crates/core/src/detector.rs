//! Hand detection: detector-space preprocessing, candidate selection and cropping.
//!
//! Boxes, centers and crops all share the 300×300 detector coordinate frame.

use alloc::string::String;
use alloc::vec;

use crate::image::{FloatImage, Frame, RgbImage};
use crate::model::{ModelError, ModelHandle};
use crate::tensor::{NamedTensors, Tensor};
use crate::DETECTOR_SIZE;

pub const BOXES_OUTPUT: &str = "boxes";
pub const SCORES_OUTPUT: &str = "scores";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DetectorError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("detector output contract violated: {0}")]
    OutputContract(String),
    #[error("min_score {0} outside [0, 1]")]
    InvalidMinScore(f32),
    #[error("bounding box {0:?} is empty after clamping to the frame")]
    DegenerateBox(BoxRect),
}

/// Integer rectangle in detector space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BoxRect {
    pub x: i32,
    pub y: i32,
    pub w: i32,
    pub h: i32,
}

impl BoxRect {
    pub fn new(x: i32, y: i32, w: i32, h: i32) -> Self {
        Self { x, y, w, h }
    }

    /// Intersection with `[0, width) × [0, height)`, or `None` if empty.
    pub fn clamped(&self, width: usize, height: usize) -> Option<BoxRect> {
        let (w_max, h_max) = (width as i64, height as i64);
        let x0 = (self.x as i64).clamp(0, w_max);
        let y0 = (self.y as i64).clamp(0, h_max);
        let x1 = (self.x as i64 + self.w as i64).clamp(0, w_max);
        let y1 = (self.y as i64 + self.h as i64).clamp(0, h_max);
        (x1 > x0 && y1 > y0).then(|| BoxRect::new(x0 as i32, y0 as i32, (x1 - x0) as i32, (y1 - y0) as i32))
    }

    pub fn contains(&self, px: f64, py: f64) -> bool {
        px >= self.x as f64
            && py >= self.y as f64
            && px <= (self.x + self.w) as f64
            && py <= (self.y + self.h) as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Detection {
    pub bbox: BoxRect,
    pub score: f32,
    /// Box center in detector space.
    pub center: (f64, f64),
}

impl Detection {
    pub fn new(bbox: BoxRect, score: f32) -> Self {
        let center = (bbox.x as f64 + bbox.w as f64 / 2.0, bbox.y as f64 + bbox.h as f64 / 2.0);
        Self { bbox, score, center }
    }

    /// Detection covering a whole `width`×`height` image.
    pub fn full_frame(width: usize, height: usize) -> Self {
        Self::new(BoxRect::new(0, 0, width as i32, height as i32), 1.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CroppedHand {
    pub pixels: FloatImage,
    pub detection: Detection,
}

impl CroppedHand {
    /// Treats a whole image as the hand crop, as for dataset samples.
    pub fn whole(image: &RgbImage) -> Self {
        Self { pixels: image.to_float(), detection: Detection::full_frame(image.width(), image.height()) }
    }
}

/// Resizes a frame into detector space with values in `[0, 1]`.
pub fn to_detector_space(frame: &Frame) -> FloatImage {
    frame.image.to_float().resize_bilinear(DETECTOR_SIZE, DETECTOR_SIZE)
}

/// Wraps an image as a batch-of-one channels-last tensor.
pub fn image_tensor(image: &FloatImage) -> Tensor {
    Tensor::new(vec![1, image.height(), image.width(), 3], image.as_raw().to_vec())
        .expect("image buffer matches its dimensions")
}

/// Builds the 1×300×300×3 detector input. Frames are never empty, that is
/// rejected when their image is constructed.
pub fn preprocess_frame(frame: &Frame) -> Tensor {
    image_tensor(&to_detector_space(frame))
}

/// Number of candidate boxes in a `boxes` output of shape `N×4` or `1×N×4`.
fn box_count(boxes: &Tensor) -> Result<usize, DetectorError> {
    match boxes.shape() {
        [n, 4] | [1, n, 4] => Ok(*n),
        other => Err(DetectorError::OutputContract(alloc::format!("boxes shape {other:?} is not Nx4"))),
    }
}

fn score_count(scores: &Tensor) -> Result<usize, DetectorError> {
    match scores.shape() {
        [n] | [n, 1] | [1, n] | [1, n, 1] => Ok(*n),
        other => Err(DetectorError::OutputContract(alloc::format!("scores shape {other:?} is not Nx1"))),
    }
}

/// Converts normalized `[x_min, y_min, x_max, y_max]` to a clamped detector-space box.
pub fn denormalize_box(corners: &[f32]) -> Option<BoxRect> {
    let side = DETECTOR_SIZE as f64;
    let px = |v: f32| libm::round(v as f64 * side).clamp(0.0, side) as i32;
    let (xa, xb) = (px(corners[0]), px(corners[2]));
    let (ya, yb) = (px(corners[1]), px(corners[3]));
    let (x0, x1) = (xa.min(xb), xa.max(xb));
    let (y0, y1) = (ya.min(yb), ya.max(yb));
    (x1 > x0 && y1 > y0).then(|| BoxRect::new(x0, y0, x1 - x0, y1 - y0))
}

/// Picks the single best hand box from raw detector outputs.
///
/// Candidates below `min_score` or degenerate after clamping are ignored;
/// ties on score go to the lower box index.
pub fn select_detection(outputs: &NamedTensors, min_score: f32) -> Result<Option<Detection>, DetectorError> {
    if !(0.0..=1.0).contains(&min_score) {
        return Err(DetectorError::InvalidMinScore(min_score));
    }
    let missing = |name: &str| DetectorError::OutputContract(alloc::format!("missing output `{name}`"));
    let boxes = outputs.get(BOXES_OUTPUT).ok_or_else(|| missing(BOXES_OUTPUT))?;
    let scores = outputs.get(SCORES_OUTPUT).ok_or_else(|| missing(SCORES_OUTPUT))?;
    let n = box_count(boxes)?;
    if score_count(scores)? != n {
        return Err(DetectorError::OutputContract(alloc::format!(
            "{n} boxes but {} scores",
            score_count(scores)?
        )));
    }
    if boxes.data().iter().chain(scores.data()).any(|v| !v.is_finite()) {
        return Err(DetectorError::OutputContract("non-finite detector output".into()));
    }

    let mut best: Option<Detection> = None;
    for (corners, &raw) in boxes.data().chunks_exact(4).zip(scores.data()) {
        let score = raw.clamp(0.0, 1.0);
        if score < min_score || best.is_some_and(|b| b.score >= score) {
            continue;
        }
        if let Some(bbox) = denormalize_box(corners) {
            best = Some(Detection::new(bbox, score));
        }
    }
    Ok(best)
}

/// Runs the detector on a preprocessed tensor and selects the top hand.
pub fn detect_hand(tensor: Tensor, model: &ModelHandle, min_score: f32) -> Result<Option<Detection>, DetectorError> {
    if !(0.0..=1.0).contains(&min_score) {
        return Err(DetectorError::InvalidMinScore(min_score));
    }
    let outputs = model.forward_single(tensor)?;
    select_detection(&outputs, min_score)
}

/// Cuts the detection's box out of a detector-space image, clamping it first.
pub fn crop_hand(image: &FloatImage, detection: &Detection) -> Result<CroppedHand, DetectorError> {
    let b = detection
        .bbox
        .clamped(image.width(), image.height())
        .ok_or(DetectorError::DegenerateBox(detection.bbox))?;
    Ok(CroppedHand {
        pixels: image.crop(b.x as usize, b.y as usize, b.w as usize, b.h as usize),
        detection: *detection,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    fn outputs(boxes: &[[f32; 4]], scores: &[f32]) -> NamedTensors {
        let mut m = NamedTensors::new();
        let flat: Vec<f32> = boxes.iter().flatten().copied().collect();
        m.insert(BOXES_OUTPUT.into(), Tensor::new(vec![boxes.len(), 4], flat).unwrap());
        m.insert(SCORES_OUTPUT.into(), Tensor::new(vec![scores.len(), 1], scores.to_vec()).unwrap());
        m
    }

    fn frame(w: usize, h: usize) -> Frame {
        Frame::new(RgbImage::filled(w, h, [0, 0, 0]).unwrap(), 0, 0)
    }

    #[test]
    fn no_candidates_means_no_hand() {
        assert_eq!(select_detection(&outputs(&[], &[]), 0.5).unwrap(), None);
    }

    #[test]
    fn picks_highest_scoring_candidate() {
        let o = outputs(&[[0.1, 0.1, 0.2, 0.2], [0.5, 0.5, 0.9, 0.8]], &[0.6, 0.9]);
        let d = select_detection(&o, 0.5).unwrap().unwrap();
        assert_eq!(d.score, 0.9);
        assert_eq!(d.bbox, BoxRect::new(150, 150, 120, 90));
        assert_eq!(d.center, (210.0, 195.0));
    }

    #[test]
    fn below_threshold_is_none() {
        let o = outputs(&[[0.1, 0.1, 0.2, 0.2]], &[0.4]);
        assert_eq!(select_detection(&o, 0.5).unwrap(), None);
    }

    #[test]
    fn ties_go_to_lower_index() {
        let o = outputs(&[[0.0, 0.0, 0.1, 0.1], [0.5, 0.5, 0.6, 0.6]], &[0.7, 0.7]);
        assert_eq!(select_detection(&o, 0.5).unwrap().unwrap().bbox.x, 0);
    }

    #[test]
    fn degenerate_candidates_are_skipped() {
        let o = outputs(&[[0.5, 0.5, 0.5, 0.9], [0.1, 0.1, 0.3, 0.3]], &[0.99, 0.6]);
        assert_eq!(select_detection(&o, 0.5).unwrap().unwrap().score, 0.6);
    }

    #[test]
    fn out_of_range_boxes_are_clamped() {
        let o = outputs(&[[-0.2, 0.9, 1.4, 1.1]], &[0.8]);
        assert_eq!(select_detection(&o, 0.0).unwrap().unwrap().bbox, BoxRect::new(0, 270, 300, 30));
    }

    #[test]
    fn contract_violations() {
        let mut o = outputs(&[[0.1, 0.1, 0.2, 0.2]], &[0.4, 0.5]);
        assert!(matches!(select_detection(&o, 0.5), Err(DetectorError::OutputContract(_))));
        o.remove(SCORES_OUTPUT);
        assert!(matches!(select_detection(&o, 0.5), Err(DetectorError::OutputContract(_))));
        let o = outputs(&[[f32::NAN, 0.1, 0.2, 0.2]], &[0.4]);
        assert!(matches!(select_detection(&o, 0.5), Err(DetectorError::OutputContract(_))));
        assert!(matches!(select_detection(&outputs(&[], &[]), 1.5), Err(DetectorError::InvalidMinScore(_))));
    }

    #[test]
    fn preprocess_rescales_only_at_native_size() {
        let mut f = frame(300, 300);
        f.image.put_pixel(7, 9, [255, 51, 0]);
        let t = preprocess_frame(&f);
        assert_eq!(t.shape(), &[1, 300, 300, 3]);
        let i = (9 * 300 + 7) * 3;
        assert_eq!(&t.data()[i..i + 3], &[1.0, 0.2, 0.0]);
    }

    #[test]
    fn uniform_gray_stays_uniform() {
        let f = Frame::new(RgbImage::filled(640, 480, [128; 3]).unwrap(), 0, 0);
        let t = preprocess_frame(&f);
        assert!(t.data().iter().all(|&v| (v - 128.0 / 255.0).abs() < 1e-6));
    }

    #[test]
    fn single_white_pixel_lands_at_proportional_location() {
        let mut f = frame(640, 480);
        f.image.put_pixel(320, 240, [255; 3]);
        let t = preprocess_frame(&f);
        let (argmax, _) = t
            .data()
            .iter()
            .enumerate()
            .step_by(3)
            .fold((0, f32::MIN), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
        let (x, y) = ((argmax / 3) % 300, (argmax / 3) / 300);
        // 320 * 300 / 640 = 150, 240 * 300 / 480 = 150
        assert!(x.abs_diff(150) <= 1 && y.abs_diff(150) <= 1, "max at ({x}, {y})");
    }

    #[test]
    fn full_frame_crop() {
        let img = frame(300, 300).image.to_float();
        let c = crop_hand(&img, &Detection::new(BoxRect::new(0, 0, 300, 300), 0.9)).unwrap();
        assert_eq!(c.pixels, img);
    }

    #[test]
    fn crop_clamps_at_border() {
        let img = frame(300, 300).image.to_float();
        let d = Detection::new(BoxRect::new(280, 280, 40, 40), 0.9);
        let c = crop_hand(&img, &d).unwrap();
        assert_eq!((c.pixels.width(), c.pixels.height()), (20, 20));
        assert_eq!(c.detection, d);
    }

    #[test]
    fn crop_preserves_marker_offset() {
        let mut f = frame(300, 300);
        f.image.put_pixel(110, 60, [255, 0, 0]);
        let c = crop_hand(&f.image.to_float(), &Detection::new(BoxRect::new(100, 50, 80, 120), 0.9)).unwrap();
        assert_eq!((c.pixels.width(), c.pixels.height()), (80, 120));
        assert_eq!(c.pixels.pixel(10, 10), [1.0, 0.0, 0.0]);
        let lit = c.pixels.as_raw().iter().filter(|&&v| v > 0.0).count();
        assert_eq!(lit, 1);
    }

    #[test]
    fn crop_rejects_degenerate_box() {
        let img = frame(300, 300).image.to_float();
        let d = Detection::new(BoxRect::new(300, 10, 5, 5), 0.9);
        assert!(matches!(crop_hand(&img, &d), Err(DetectorError::DegenerateBox(_))));
    }
}
