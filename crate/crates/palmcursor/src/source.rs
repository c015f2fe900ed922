//! Frame sources: replayed recordings, live capture, and the latest-frame
//! slot that drops stale frames when processing falls behind.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use palmcursor_core::Frame;

use crate::recording::{Recording, RecordingError};

#[derive(Debug, thiserror::Error)]
pub enum SourceError {
    #[error("frame source unavailable: {0}")]
    Unavailable(String),
    #[error(transparent)]
    Recording(#[from] RecordingError),
    #[error("capture failed: {0}")]
    Capture(String),
}

pub trait FrameSource: Send {
    /// Next frame, or `None` once the source is exhausted.
    fn next_frame(&mut self) -> Result<Option<Frame>, SourceError>;

    /// Whether frames arrive in real time and may be dropped when the
    /// consumer is slow.
    fn is_live(&self) -> bool {
        false
    }
}

impl<S: FrameSource + ?Sized> FrameSource for Box<S> {
    fn next_frame(&mut self) -> Result<Option<Frame>, SourceError> {
        (**self).next_frame()
    }

    fn is_live(&self) -> bool {
        (**self).is_live()
    }
}

/// Plays back a recording frame by frame, never dropping any.
pub struct ReplaySource {
    recording: Recording,
    next: usize,
}

impl ReplaySource {
    pub fn new(recording: Recording) -> Self {
        Self { recording, next: 0 }
    }

    pub fn open(dir: &std::path::Path) -> Result<Self, SourceError> {
        Ok(Self::new(Recording::open(dir)?))
    }
}

impl FrameSource for ReplaySource {
    fn next_frame(&mut self) -> Result<Option<Frame>, SourceError> {
        if self.next >= self.recording.len() {
            return Ok(None);
        }
        let frame = self.recording.frame(self.next)?;
        self.next += 1;
        Ok(Some(frame))
    }
}

/// Frames held in memory, mainly for tests and generated scenes.
pub struct VecSource {
    frames: std::vec::IntoIter<Frame>,
}

impl VecSource {
    pub fn new(frames: Vec<Frame>) -> Self {
        Self { frames: frames.into_iter() }
    }
}

impl FrameSource for VecSource {
    fn next_frame(&mut self) -> Result<Option<Frame>, SourceError> {
        Ok(self.frames.next())
    }
}

/// Live capture from a camera device.
///
/// This build has no camera driver, so opening always fails with
/// [`SourceError::Unavailable`]; record from a replay or generated source
/// instead.
pub fn open_camera(index: u32) -> Result<Box<dyn FrameSource>, SourceError> {
    Err(SourceError::Unavailable(format!("camera {index}: no capture driver in this build")))
}

#[derive(Default)]
struct Slot {
    frame: Option<Frame>,
    done: bool,
    error: Option<SourceError>,
}

/// Single-frame mailbox between a capture thread and the frame loop. A new
/// frame overwrites an untaken one.
struct LatestFrame {
    slot: Mutex<Slot>,
    ready: Condvar,
    dropped: AtomicU64,
}

impl LatestFrame {
    fn put(&self, frame: Frame) {
        let mut slot = self.slot.lock().unwrap();
        if slot.frame.replace(frame).is_some() {
            self.dropped.fetch_add(1, Ordering::Relaxed);
        }
        self.ready.notify_one();
    }

    fn close(&self, error: Option<SourceError>) {
        let mut slot = self.slot.lock().unwrap();
        slot.done = true;
        slot.error = error;
        self.ready.notify_one();
    }

    fn take(&self) -> Result<Option<Frame>, SourceError> {
        let mut slot = self.slot.lock().unwrap();
        loop {
            if let Some(frame) = slot.frame.take() {
                return Ok(Some(frame));
            }
            if slot.done {
                return match slot.error.take() {
                    Some(e) => Err(e),
                    None => Ok(None),
                };
            }
            slot = self.ready.wait(slot).unwrap();
        }
    }
}

/// Runs a live source on its own thread and hands the loop only the newest
/// frame, discarding any it did not get to in time.
pub struct LatestFrameSource {
    shared: Arc<LatestFrame>,
    stop: Arc<AtomicBool>,
    worker: Option<JoinHandle<()>>,
}

impl LatestFrameSource {
    pub fn spawn<S: FrameSource + 'static>(mut inner: S) -> Self {
        let shared = Arc::new(LatestFrame { slot: Mutex::default(), ready: Condvar::new(), dropped: AtomicU64::new(0) });
        let stop = Arc::new(AtomicBool::new(false));
        let worker = {
            let (shared, stop) = (Arc::clone(&shared), Arc::clone(&stop));
            thread::spawn(move || {
                while !stop.load(Ordering::Relaxed) {
                    match inner.next_frame() {
                        Ok(Some(frame)) => shared.put(frame),
                        Ok(None) => return shared.close(None),
                        Err(e) => return shared.close(Some(e)),
                    }
                }
                shared.close(None);
            })
        };
        Self { shared, stop, worker: Some(worker) }
    }

    /// Frames overwritten before the loop took them.
    pub fn dropped(&self) -> u64 {
        self.shared.dropped.load(Ordering::Relaxed)
    }
}

impl FrameSource for LatestFrameSource {
    fn next_frame(&mut self) -> Result<Option<Frame>, SourceError> {
        self.shared.take()
    }

    fn is_live(&self) -> bool {
        true
    }
}

impl Drop for LatestFrameSource {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(worker) = self.worker.take() {
            let _ = worker.join();
        }
    }
}

/// Releases frames from an inner source no faster than its timestamps say,
/// imitating a camera. The first frame is released immediately.
pub struct PacedSource<S> {
    inner: S,
    start: Option<(Instant, u64)>,
}

impl<S: FrameSource> PacedSource<S> {
    pub fn new(inner: S) -> Self {
        Self { inner, start: None }
    }
}

impl<S: FrameSource> FrameSource for PacedSource<S> {
    fn next_frame(&mut self) -> Result<Option<Frame>, SourceError> {
        let Some(frame) = self.inner.next_frame()? else { return Ok(None) };
        let (t0, ts0) = *self.start.get_or_insert((Instant::now(), frame.timestamp_ms));
        let due = t0 + Duration::from_millis(frame.timestamp_ms.saturating_sub(ts0));
        if let Some(wait) = due.checked_duration_since(Instant::now()) {
            thread::sleep(wait);
        }
        Ok(Some(frame))
    }

    fn is_live(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use palmcursor_core::RgbImage;

    fn frames(n: u64, step_ms: u64) -> Vec<Frame> {
        (0..n).map(|i| Frame::new(RgbImage::filled(2, 2, [i as u8; 3]).unwrap(), i, i * step_ms)).collect()
    }

    #[test]
    fn vec_source_drains_in_order() {
        let mut s = VecSource::new(frames(3, 10));
        let seqs: Vec<u64> = std::iter::from_fn(|| s.next_frame().unwrap()).map(|f| f.sequence).collect();
        assert_eq!(seqs, [0, 1, 2]);
    }

    #[test]
    fn slow_consumer_gets_newest_frames() {
        let mut live = LatestFrameSource::spawn(PacedSource::new(VecSource::new(frames(30, 5))));
        let mut seen = Vec::new();
        while let Some(f) = live.next_frame().unwrap() {
            seen.push(f.sequence);
            thread::sleep(Duration::from_millis(20));
        }
        assert!(seen.windows(2).all(|w| w[0] < w[1]), "{seen:?}");
        assert!(seen.len() < 30);
        assert_eq!(seen.len() as u64 + live.dropped(), 30);
    }

    #[test]
    fn camera_is_reported_unavailable() {
        assert!(matches!(open_camera(0), Err(SourceError::Unavailable(_))));
    }

    #[test]
    fn pacing_follows_timestamps() {
        let start = Instant::now();
        let mut s = PacedSource::new(VecSource::new(frames(4, 30)));
        while s.next_frame().unwrap().is_some() {}
        assert!(start.elapsed() >= Duration::from_millis(90));
    }
}
