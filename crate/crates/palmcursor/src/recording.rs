//! Session recordings: a directory holding `manifest.json` and one
//! `frame_%06d.png` per frame.
//!
//! ```json
//! {
//!   "version": 1,
//!   "frame_count": 2,
//!   "width": 640,
//!   "height": 480,
//!   "frames": [
//!     { "file": "frame_000000.png", "timestamp_ms": 0 },
//!     { "file": "frame_000001.png", "timestamp_ms": 66, "truth": "palm", "tags": { "lighting": "dim" } }
//!   ]
//! }
//! ```
//!
//! `truth` and `tags` are optional annotations used by evaluation runs.
//! `truth` is a gesture name, `"unknown"` for a pose outside the four
//! classes, or `"none"` when no hand is in view.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use palmcursor_core::{Frame, RgbImage};
use serde::{Deserialize, Serialize};

use crate::source::{FrameSource, SourceError};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum RecordingError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed manifest {path}: {reason}")]
    Manifest { path: PathBuf, reason: String },
    #[error("cannot decode frame {path}: {reason}")]
    Image { path: PathBuf, reason: String },
    #[error("frame {sequence} is {actual:?}, recording geometry is {expected:?}")]
    Geometry { sequence: u64, expected: (u32, u32), actual: (u32, u32) },
    #[error("frame timestamp {timestamp_ms} ms is earlier than the previous {previous_ms} ms")]
    TimestampOrder { timestamp_ms: u64, previous_ms: u64 },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RecordingError + '_ {
    move |source| RecordingError::Io { path: path.into(), source }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameEntry {
    pub file: String,
    pub timestamp_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub tags: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub frame_count: usize,
    pub width: u32,
    pub height: u32,
    pub frames: Vec<FrameEntry>,
}

impl Manifest {
    fn validate(&self, path: &Path) -> Result<(), RecordingError> {
        let bad = |reason: String| RecordingError::Manifest { path: path.into(), reason };
        if self.version != MANIFEST_VERSION {
            return Err(bad(format!("version {} is not {MANIFEST_VERSION}", self.version)));
        }
        if self.frame_count != self.frames.len() {
            return Err(bad(format!("frame_count {} but {} frames listed", self.frame_count, self.frames.len())));
        }
        if self.frame_count > 0 && (self.width == 0 || self.height == 0) {
            return Err(bad(format!("geometry {}x{} is empty", self.width, self.height)));
        }
        if let Some(w) = self.frames.windows(2).find(|w| w[1].timestamp_ms < w[0].timestamp_ms) {
            return Err(bad(format!("timestamp {} follows {}", w[1].timestamp_ms, w[0].timestamp_ms)));
        }
        if let Some(f) = self.frames.iter().find(|f| Path::new(&f.file).components().count() != 1) {
            return Err(bad(format!("frame file `{}` must be a bare file name", f.file)));
        }
        Ok(())
    }
}

pub fn frame_file_name(index: usize) -> String {
    format!("frame_{index:06}.png")
}

/// An opened recording directory.
#[derive(Clone, Debug)]
pub struct Recording {
    dir: PathBuf,
    manifest: Manifest,
}

impl Recording {
    pub fn open(dir: &Path) -> Result<Self, RecordingError> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        let manifest: Manifest = serde_json::from_str(&text)
            .map_err(|e| RecordingError::Manifest { path: path.clone(), reason: e.to_string() })?;
        manifest.validate(&path)?;
        if let Some(f) = manifest.frames.iter().find(|f| !dir.join(&f.file).is_file()) {
            return Err(RecordingError::Manifest { path, reason: format!("frame file `{}` is missing", f.file) });
        }
        Ok(Self { dir: dir.to_path_buf(), manifest })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn len(&self) -> usize {
        self.manifest.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.frames.is_empty()
    }

    /// Decodes frame `index`; its sequence number is the index.
    pub fn frame(&self, index: usize) -> Result<Frame, RecordingError> {
        let entry = &self.manifest.frames[index];
        let image = read_image(&self.dir.join(&entry.file))?;
        let expected = (self.manifest.width, self.manifest.height);
        let actual = (image.width() as u32, image.height() as u32);
        if actual != expected {
            return Err(RecordingError::Geometry { sequence: index as u64, expected, actual });
        }
        Ok(Frame::new(image, index as u64, entry.timestamp_ms))
    }
}

pub fn read_image(path: &Path) -> Result<RgbImage, RecordingError> {
    let decoded = image::open(path).map_err(|e| RecordingError::Image { path: path.into(), reason: e.to_string() })?;
    let rgb = decoded.into_rgb8();
    let (w, h) = rgb.dimensions();
    RgbImage::from_raw(w as usize, h as usize, rgb.into_raw())
        .map_err(|e| RecordingError::Image { path: path.into(), reason: e.to_string() })
}

pub fn write_png(path: &Path, image: &RgbImage) -> Result<(), RecordingError> {
    image::save_buffer(path, image.as_raw(), image.width() as u32, image.height() as u32, image::ColorType::Rgb8)
        .map_err(|e| RecordingError::Image { path: path.into(), reason: e.to_string() })
}

/// Streams frames into a new recording directory.
pub struct RecordingWriter {
    dir: PathBuf,
    manifest: Manifest,
}

impl RecordingWriter {
    pub fn create(dir: &Path) -> Result<Self, RecordingError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let manifest = Manifest { version: MANIFEST_VERSION, frame_count: 0, width: 0, height: 0, frames: Vec::new() };
        Ok(Self { dir: dir.to_path_buf(), manifest })
    }

    pub fn len(&self) -> usize {
        self.manifest.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.frames.is_empty()
    }

    pub fn push(&mut self, frame: &Frame) -> Result<(), RecordingError> {
        self.push_annotated(frame, None, BTreeMap::new())
    }

    pub fn push_annotated(
        &mut self,
        frame: &Frame,
        truth: Option<String>,
        tags: BTreeMap<String, String>,
    ) -> Result<(), RecordingError> {
        let size = (frame.image.width() as u32, frame.image.height() as u32);
        if self.manifest.frames.is_empty() {
            (self.manifest.width, self.manifest.height) = size;
        } else if size != (self.manifest.width, self.manifest.height) {
            return Err(RecordingError::Geometry {
                sequence: frame.sequence,
                expected: (self.manifest.width, self.manifest.height),
                actual: size,
            });
        }
        if let Some(last) = self.manifest.frames.last() {
            if frame.timestamp_ms < last.timestamp_ms {
                return Err(RecordingError::TimestampOrder {
                    timestamp_ms: frame.timestamp_ms,
                    previous_ms: last.timestamp_ms,
                });
            }
        }
        let file = frame_file_name(self.manifest.frames.len());
        write_png(&self.dir.join(&file), &frame.image)?;
        self.manifest.frames.push(FrameEntry { file, timestamp_ms: frame.timestamp_ms, truth, tags });
        self.manifest.frame_count = self.manifest.frames.len();
        Ok(())
    }

    /// Writes the manifest. A writer with no frames produces a valid empty
    /// recording.
    pub fn finish(self) -> Result<Recording, RecordingError> {
        let path = self.dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&self.manifest).expect("manifests always serialize");
        fs::write(&path, text + "\n").map_err(io_err(&path))?;
        Ok(Recording { dir: self.dir, manifest: self.manifest })
    }
}

/// Captures frames from `source` into `out` until `duration` has elapsed,
/// measured on frame timestamps from the first frame. A zero duration
/// writes an empty recording.
pub fn record(
    source: &mut dyn FrameSource,
    out: &Path,
    duration: Duration,
) -> Result<Recording, RecordError> {
    let mut writer = RecordingWriter::create(out)?;
    let limit = duration.as_millis() as u64;
    let mut start = None;
    if limit > 0 {
        while let Some(frame) = source.next_frame()? {
            let t0 = *start.get_or_insert(frame.timestamp_ms);
            if frame.timestamp_ms.saturating_sub(t0) >= limit {
                break;
            }
            writer.push(&Frame::new(frame.image, writer.len() as u64, frame.timestamp_ms - t0))?;
        }
    }
    Ok(writer.finish()?)
}

#[derive(Debug, thiserror::Error)]
pub enum RecordError {
    #[error(transparent)]
    Source(#[from] SourceError),
    #[error(transparent)]
    Write(#[from] RecordingError),
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(seq: u64, ts: u64, shade: u8) -> Frame {
        let mut img = RgbImage::filled(8, 6, [shade, 0, 0]).unwrap();
        img.put_pixel(3, 2, [1, 2, 3]);
        Frame::new(img, seq, ts)
    }

    #[test]
    fn write_then_read() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = RecordingWriter::create(dir.path()).unwrap();
        for i in 0..3 {
            w.push(&frame(i, i * 66, i as u8 * 50)).unwrap();
        }
        w.finish().unwrap();
        let r = Recording::open(dir.path()).unwrap();
        assert_eq!(r.len(), 3);
        assert!(dir.path().join("frame_000002.png").is_file());
        for i in 0..3 {
            assert_eq!(r.frame(i as usize).unwrap(), frame(i, i * 66, i as u8 * 50));
        }
    }

    #[test]
    fn empty_recording_is_valid() {
        let dir = tempfile::tempdir().unwrap();
        RecordingWriter::create(dir.path()).unwrap().finish().unwrap();
        let r = Recording::open(dir.path()).unwrap();
        assert!(r.is_empty());
        assert_eq!(r.manifest().frame_count, 0);
    }

    #[test]
    fn rejects_out_of_order_and_resized_frames() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = RecordingWriter::create(dir.path()).unwrap();
        w.push(&frame(0, 100, 0)).unwrap();
        assert!(matches!(w.push(&frame(1, 50, 0)), Err(RecordingError::TimestampOrder { .. })));
        let big = Frame::new(RgbImage::filled(9, 6, [0; 3]).unwrap(), 1, 200);
        assert!(matches!(w.push(&big), Err(RecordingError::Geometry { .. })));
    }

    #[test]
    fn manifest_count_must_match() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = RecordingWriter::create(dir.path()).unwrap();
        w.push(&frame(0, 0, 0)).unwrap();
        w.finish().unwrap();
        let path = dir.path().join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).unwrap().replace("\"frame_count\": 1", "\"frame_count\": 2");
        fs::write(&path, text).unwrap();
        assert!(matches!(Recording::open(dir.path()), Err(RecordingError::Manifest { .. })));
    }

    #[test]
    fn missing_frame_file() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = RecordingWriter::create(dir.path()).unwrap();
        w.push(&frame(0, 0, 0)).unwrap();
        w.finish().unwrap();
        fs::remove_file(dir.path().join("frame_000000.png")).unwrap();
        let err = Recording::open(dir.path()).unwrap_err();
        assert!(err.to_string().contains("frame_000000.png"));
    }

    #[test]
    fn annotations_survive() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = RecordingWriter::create(dir.path()).unwrap();
        let tags = BTreeMap::from([("background".to_string(), "busy".to_string())]);
        w.push_annotated(&frame(0, 0, 0), Some("palm".into()), tags.clone()).unwrap();
        w.finish().unwrap();
        let r = Recording::open(dir.path()).unwrap();
        assert_eq!(r.manifest().frames[0].truth.as_deref(), Some("palm"));
        assert_eq!(r.manifest().frames[0].tags, tags);
    }

    fn paced_frames(n: u64) -> crate::source::VecSource {
        crate::source::VecSource::new((0..n).map(|i| frame(i, 5000 + i * 66, 7)).collect())
    }

    #[test]
    fn two_seconds_at_fifteen_fps() {
        let dir = tempfile::tempdir().unwrap();
        let r = record(&mut paced_frames(100), dir.path(), Duration::from_secs(2)).unwrap();
        // Timestamps 0, 66, ..., 1980 fall inside the window.
        assert_eq!(r.len(), 31);
        let files = fs::read_dir(dir.path()).unwrap().filter(|e| {
            e.as_ref().unwrap().file_name().to_string_lossy().starts_with("frame_")
        });
        assert_eq!(files.count(), r.manifest().frame_count);
        assert_eq!(r.frame(30).unwrap().timestamp_ms, 1980);
    }

    #[test]
    fn zero_duration_is_empty() {
        let dir = tempfile::tempdir().unwrap();
        let r = record(&mut paced_frames(5), dir.path(), Duration::ZERO).unwrap();
        assert!(r.is_empty());
        assert!(Recording::open(dir.path()).unwrap().is_empty());
    }

    #[test]
    fn replayed_dimensions_match() {
        let dir = tempfile::tempdir().unwrap();
        record(&mut paced_frames(3), dir.path(), Duration::from_secs(1)).unwrap();
        let r = Recording::open(dir.path()).unwrap();
        let f = r.frame(0).unwrap();
        assert_eq!((f.image.width(), f.image.height()), (8, 6));
    }
}
