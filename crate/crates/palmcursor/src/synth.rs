//! Generated scenes for the color-keyed synthetic models: scripted
//! recordings, a small labeled dataset, and a ready-to-run demo directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use palmcursor_core::synthetic::{self, palette_color, UNKNOWN_COLOR};
use palmcursor_core::{Frame, Gesture, GestureLabel, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::SPLITS_FILE;
use crate::models::{write_stub_dir, StubKind};
use crate::recording::{write_png, Recording, RecordingError, RecordingWriter};
use crate::references::save_references;

pub const SCENE_SIZE: usize = 300;
pub const HAND_SIZE: usize = 60;
pub const FRAME_INTERVAL_MS: u64 = 66;
/// Acceptance radius of the demo references.
pub const DEMO_THRESHOLD: f64 = 5.0;

pub fn label_color(label: GestureLabel) -> [u8; 3] {
    match label {
        GestureLabel::Known(g) => palette_color(g),
        GestureLabel::Unknown => UNKNOWN_COLOR,
    }
}

/// Top-left corner of the hand square in frame `index` of a scripted
/// recording.
pub fn hand_position(index: usize) -> (usize, usize) {
    (20 + (index * 37) % 200, 30 + (index * 53) % 180)
}

/// A black 300×300 scene, with a hand square when `label` is set.
pub fn scene(label: Option<GestureLabel>, index: usize) -> RgbImage {
    let mut image = RgbImage::filled(SCENE_SIZE, SCENE_SIZE, [0, 0, 0]).expect("nonempty");
    if let Some(label) = label {
        let (x, y) = hand_position(index);
        image.fill_rect(x, y, HAND_SIZE, HAND_SIZE, label_color(label));
    }
    image
}

pub fn scripted_frames(script: &[Option<GestureLabel>]) -> Vec<Frame> {
    script.iter().enumerate().map(|(i, l)| Frame::new(scene(*l, i), i as u64, i as u64 * FRAME_INTERVAL_MS)).collect()
}

/// Writes a recording with one frame per script entry, annotated with its
/// truth (`"none"` for empty frames).
pub fn write_scripted_recording(dir: &Path, script: &[Option<GestureLabel>]) -> Result<Recording, RecordingError> {
    let mut writer = RecordingWriter::create(dir)?;
    for (frame, label) in scripted_frames(script).iter().zip(script) {
        let truth = label.map_or("none", GestureLabel::name).to_string();
        writer.push_annotated(frame, Some(truth), BTreeMap::new())?;
    }
    writer.finish()
}

/// The 50-frame session exercising every controller transition.
pub fn demo_script() -> Vec<Option<GestureLabel>> {
    use GestureLabel::{Known, Unknown};
    let (fist, palm, left, right) =
        (Known(Gesture::Fist), Known(Gesture::Palm), Known(Gesture::PointLeft), Known(Gesture::PointRight));
    let runs: [(Option<GestureLabel>, usize); 21] = [
        (None, 3),
        (Some(Unknown), 1),
        (Some(left), 1),
        (Some(fist), 1),
        (Some(palm), 6),
        (Some(left), 4),
        (None, 1),
        (Some(right), 3),
        (Some(Unknown), 1),
        (Some(left), 5),
        (Some(palm), 5),
        (Some(fist), 1),
        (Some(left), 3),
        (Some(palm), 5),
        (Some(right), 4),
        (Some(fist), 1),
        (Some(Unknown), 1),
        (None, 1),
        (Some(fist), 1),
        (Some(palm), 1),
        (None, 1),
    ];
    runs.iter().flat_map(|&(label, n)| std::iter::repeat_n(label, n)).collect()
}

/// A long session cycling through every gesture, for throughput runs.
pub fn cycling_script(frames: usize) -> Vec<Option<GestureLabel>> {
    let cycle = [
        None,
        Some(GestureLabel::Known(Gesture::Palm)),
        Some(GestureLabel::Known(Gesture::Palm)),
        Some(GestureLabel::Known(Gesture::PointLeft)),
        Some(GestureLabel::Known(Gesture::PointLeft)),
        Some(GestureLabel::Known(Gesture::PointLeft)),
        Some(GestureLabel::Known(Gesture::PointRight)),
        Some(GestureLabel::Unknown),
        Some(GestureLabel::Known(Gesture::Fist)),
    ];
    cycle.iter().copied().cycle().take(frames).collect()
}

/// Writes `per_class` hand-crop images per gesture under `root`, with a
/// `splits.json` holding the last two of each class out as validation and
/// test images.
pub fn write_dataset(root: &Path, per_class: usize, seed: u64) -> Result<(), RecordingError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut val, mut test) = (Vec::new(), Vec::new());
    let mut conditions = BTreeMap::new();
    for g in Gesture::ALL {
        let dir = root.join(g.name());
        fs::create_dir_all(&dir).map_err(|source| RecordingError::Io { path: dir.clone(), source })?;
        for i in 0..per_class {
            let base = palette_color(g).map(|c| (c as i32 + rng.gen_range(-12..=12)).clamp(0, 255));
            let textured = i % 2 == 1;
            let noise = if textured { 25 } else { 8 };
            let mut image = RgbImage::filled(SCENE_SIZE, SCENE_SIZE, [0; 3]).expect("nonempty");
            for y in 0..SCENE_SIZE {
                for x in 0..SCENE_SIZE {
                    let px = base.map(|c| (c + rng.gen_range(-noise..=noise)).clamp(0, 255) as u8);
                    image.put_pixel(x, y, px);
                }
            }
            let key = format!("{}/{i:04}.png", g.name());
            write_png(&root.join(&key), &image)?;
            let background = if textured { "textured" } else { "plain" };
            conditions.insert(key.clone(), BTreeMap::from([("background".to_string(), background.to_string())]));
            if per_class >= 2 && i == per_class - 2 {
                val.push(key);
            } else if per_class >= 2 && i == per_class - 1 {
                test.push(key);
            }
        }
    }
    let splits = serde_json::json!({ "val": val, "test": test, "conditions": conditions });
    let path = root.join(SPLITS_FILE);
    fs::write(&path, serde_json::to_string_pretty(&splits).expect("json") + "\n")
        .map_err(|source| RecordingError::Io { path, source })
}

/// Lays out a runnable demo: `models/`, `references.json`, `recording/` and
/// `dataset/`.
pub fn write_demo(out: &Path) -> Result<(), RecordingError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| RecordingError::Io { path, source }
    };
    let models = out.join("models");
    write_stub_dir(&models, &StubKind::Synthetic).map_err(io(&models))?;
    let refs = out.join("references.json");
    save_references(&synthetic::reference_set(DEMO_THRESHOLD), &refs).map_err(io(&refs))?;
    write_scripted_recording(&out.join("recording"), &demo_script())?;
    write_dataset(&out.join("dataset"), 12, 7)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn demo_script_has_fifty_frames() {
        let s = demo_script();
        assert_eq!(s.len(), 50);
        assert_eq!(s[6], Some(GestureLabel::Known(Gesture::Palm)));
        assert_eq!(s[31], Some(GestureLabel::Known(Gesture::Fist)));
        assert_eq!(s[49], None);
    }

    #[test]
    fn hand_stays_inside_the_scene() {
        for i in 0..500 {
            let (x, y) = hand_position(i);
            assert!(x + HAND_SIZE <= SCENE_SIZE && y + HAND_SIZE <= SCENE_SIZE);
        }
    }

    #[test]
    fn dataset_is_deterministic() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        write_dataset(a.path(), 3, 5).unwrap();
        write_dataset(b.path(), 3, 5).unwrap();
        for key in ["palm/0001.png", SPLITS_FILE] {
            assert_eq!(fs::read(a.path().join(key)).unwrap(), fs::read(b.path().join(key)).unwrap());
        }
    }
}
