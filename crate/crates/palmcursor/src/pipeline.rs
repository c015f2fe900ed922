//! The frame loop: detect, crop, classify, gate, step the controller,
//! dispatch, publish.

use std::io::Cursor;
use std::thread;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use base64::Engine as _;
use palmcursor_core::classifier::{
    embed_and_classify, open_set_decide_with, preprocess_crop, ClassSamples, ClassifierError, DecisionRule, Embedding,
    GestureDecision, ReferenceSet,
};
use palmcursor_core::cursor::{ControllerConfig, ControllerError, ControllerState, CursorCommand, ScreenGeometry};
use palmcursor_core::detector::{crop_hand, detect_hand, image_tensor, to_detector_space, Detection, DetectorError};
use palmcursor_core::{Frame, Gesture, EMBEDDING_DIM};
use serde_json::json;

use crate::backend::{CursorBackend, SimulatedBackend};
use crate::models::ModelSet;
use crate::source::{FrameSource, SourceError};
use crate::telemetry::{
    ack_json, error_json, BoxView, ControlMessage, ControlRequest, DecisionView, TelemetryEvent, TelemetryHub,
};

#[derive(Debug, thiserror::Error)]
pub enum FrameError {
    #[error("hand detection failed: {0}")]
    Detector(#[from] DetectorError),
    #[error("classification failed: {0}")]
    Classifier(#[from] ClassifierError),
    #[error("controller rejected the frame: {0}")]
    Controller(#[from] ControllerError),
    #[error("embedding has {actual} values, references have {expected}")]
    Dimension { expected: usize, actual: usize },
}

/// Tunables the control channel may change while running.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Settings {
    pub min_score: f32,
    pub rule: DecisionRule,
    pub controller: ControllerConfig,
    pub geometry: ScreenGeometry,
    pub dry_run: bool,
    /// Every n-th event carries a thumbnail; 0 disables them.
    pub thumbnail_every: u32,
}

impl Settings {
    pub fn new(geometry: ScreenGeometry) -> Self {
        Self {
            min_score: 0.5,
            rule: DecisionRule::default(),
            controller: ControllerConfig::default(),
            geometry,
            dry_run: true,
            thumbnail_every: 3,
        }
    }
}

/// What happened to one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameOutcome {
    pub detection: Option<Detection>,
    pub decision: Option<GestureDecision>,
    pub command: CursorCommand,
}

/// All mutable state of one session.
pub struct Pipeline {
    models: ModelSet,
    references: ReferenceSet,
    pub settings: Settings,
    state: ControllerState,
    snapshots: ClassSamples,
    last_embedding: Option<Embedding>,
}

impl Pipeline {
    pub fn new(models: ModelSet, references: ReferenceSet, settings: Settings) -> Result<Self, FrameError> {
        let dim = models
            .classifier
            .output(palmcursor_core::classifier::EMBEDDING_OUTPUT)
            .and_then(|s| s.shape().last().and_then(|d| d.fixed()))
            .unwrap_or(EMBEDDING_DIM);
        if dim != references.dim() {
            return Err(FrameError::Dimension { expected: references.dim(), actual: dim });
        }
        Ok(Self {
            models,
            references,
            settings,
            state: ControllerState::new(),
            snapshots: Default::default(),
            last_embedding: None,
        })
    }

    pub fn state(&self) -> &ControllerState {
        &self.state
    }

    pub fn references(&self) -> &ReferenceSet {
        &self.references
    }

    /// Snapshots collected per class since the last rebuild.
    pub fn snapshot_counts(&self) -> [usize; 4] {
        Gesture::ALL.map(|g| self.snapshots[g.index()].len())
    }

    /// Runs one frame through the chain. On error the controller is left as
    /// it was.
    pub fn process_frame(&mut self, frame: &Frame) -> Result<FrameOutcome, FrameError> {
        self.last_embedding = None;
        let image = to_detector_space(frame);
        let Some(detection) = detect_hand(image_tensor(&image), &self.models.detector, self.settings.min_score)? else {
            self.state = self.state.no_hand();
            return Ok(FrameOutcome { detection: None, decision: None, command: CursorCommand::None });
        };
        let crop = crop_hand(&image, &detection)?;
        let (embedding, scores) = embed_and_classify(preprocess_crop(&crop), &self.models.classifier)?;
        if embedding.dim() != self.references.dim() {
            return Err(FrameError::Dimension { expected: self.references.dim(), actual: embedding.dim() });
        }
        let decision = open_set_decide_with(&embedding, &scores, &self.references, self.settings.rule);
        let (state, command) = self.state.step(
            &decision,
            Some(detection.center),
            &self.settings.geometry,
            &self.settings.controller,
            frame.timestamp_ms,
        )?;
        self.state = state;
        self.last_embedding = Some(embedding);
        Ok(FrameOutcome { detection: Some(detection), decision: Some(decision), command })
    }

    /// Applies one control request and returns the reply to send.
    pub fn handle_control(&mut self, request: &ControlRequest, live_backend: bool) -> String {
        let message = match &request.message {
            Ok(m) => m,
            Err(reason) => return error_json(request, reason),
        };
        match self.apply_control(message, live_backend) {
            Ok(detail) => ack_json(request, detail),
            Err(reason) => error_json(request, &reason),
        }
    }

    fn apply_control(
        &mut self,
        message: &ControlMessage,
        live_backend: bool,
    ) -> Result<Option<serde_json::Value>, String> {
        match *message {
            ControlMessage::SetThresholdScale { value } => {
                self.references = self.references.with_scale(value).map_err(|e| e.to_string())?;
                Ok(Some(json!({ "threshold_scale": value })))
            }
            ControlMessage::SetDryRun { value } => {
                if !value && !live_backend {
                    return Err("no cursor backend is available; staying in dry run".into());
                }
                self.settings.dry_run = value;
                Ok(Some(json!({ "dry_run": value })))
            }
            ControlMessage::SetDebounce { frames, cooldown_ms } => {
                let c = &mut self.settings.controller;
                c.debounce_frames = frames.unwrap_or(c.debounce_frames);
                c.cooldown_ms = cooldown_ms.unwrap_or(c.cooldown_ms);
                Ok(Some(json!({ "frames": c.debounce_frames, "cooldown_ms": c.cooldown_ms })))
            }
            ControlMessage::Snapshot { class } => {
                let embedding = self.last_embedding.clone().ok_or("no hand was classified in the last frame")?;
                let samples = &mut self.snapshots[class.index()];
                samples.push(embedding);
                Ok(Some(json!({ "class": class.name(), "count": samples.len() })))
            }
            ControlMessage::RebuildReferences => {
                if self.snapshots.iter().all(Vec::is_empty) {
                    return Err("no snapshots accumulated".into());
                }
                self.references = self.references.rebuild_from(&self.snapshots).map_err(|e| e.to_string())?;
                self.snapshots = Default::default();
                let counts: serde_json::Map<_, _> = Gesture::ALL
                    .iter()
                    .map(|g| (g.name().to_string(), self.references.entry(*g).sample_count.into()))
                    .collect();
                Ok(Some(json!({ "sample_counts": counts })))
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SessionSummary {
    pub frames: u64,
    /// Commands other than `None`, whether injected or not.
    pub commands: u64,
    pub mean_fps: f64,
    /// Frames that failed mid-run and were skipped.
    pub errors: u64,
}

/// Output sinks of a session.
pub struct Sinks<'a> {
    /// Every command is recorded here.
    pub log: &'a mut SimulatedBackend,
    /// Receives commands when not in dry run.
    pub cursor: Option<&'a mut dyn CursorBackend>,
    pub telemetry: Option<&'a mut dyn TelemetryHub>,
}

fn unix_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

pub fn thumbnail_jpeg(frame: &Frame, max_side: u32) -> Option<String> {
    let img = image::RgbImage::from_raw(
        frame.image.width() as u32,
        frame.image.height() as u32,
        frame.image.as_raw().to_vec(),
    )?;
    let small = image::imageops::thumbnail(&img, max_side.min(img.width()), max_side.min(img.height()));
    let mut bytes = Cursor::new(Vec::new());
    image::codecs::jpeg::JpegEncoder::new_with_quality(&mut bytes, 70).encode_image(&small).ok()?;
    Some(base64::engine::general_purpose::STANDARD.encode(bytes.into_inner()))
}

/// Runs frames until the source is exhausted. Control requests are applied
/// between frames. Per-frame failures are logged and skipped; only the
/// source failing ends the run early.
pub fn run_session(
    pipeline: &mut Pipeline,
    source: &mut dyn FrameSource,
    mut sinks: Sinks<'_>,
    fps_cap: Option<f64>,
) -> Result<SessionSummary, SourceError> {
    let mut summary = SessionSummary::default();
    let started = Instant::now();
    let mut last_done: Option<Instant> = None;
    let min_interval = fps_cap.map(|cap| Duration::from_secs_f64(1.0 / cap));
    let mut seq = 0u64;

    loop {
        if let Some(hub) = sinks.telemetry.as_deref_mut() {
            for request in hub.poll_control() {
                let reply = pipeline.handle_control(&request, sinks.cursor.is_some());
                hub.reply(request.client, reply);
            }
        }
        let Some(frame) = source.next_frame()? else { break };
        if let (Some(min), Some(prev)) = (min_interval, last_done) {
            if let Some(wait) = (prev + min).checked_duration_since(Instant::now()) {
                thread::sleep(wait);
            }
        }

        let outcome = pipeline.process_frame(&frame).unwrap_or_else(|e| {
            log::warn!("frame {}: {e}", frame.sequence);
            summary.errors += 1;
            FrameOutcome { detection: None, decision: None, command: CursorCommand::None }
        });
        let command = outcome.command;
        if !command.is_none() {
            summary.commands += 1;
            let _ = sinks.log.apply(seq, frame.timestamp_ms, command);
            if !pipeline.settings.dry_run {
                if let Some(cursor) = sinks.cursor.as_deref_mut() {
                    if let Err(e) = cursor.apply(seq, frame.timestamp_ms, command) {
                        log::warn!("{e}; switching to dry run");
                        pipeline.settings.dry_run = true;
                    }
                }
            }
        }

        let now = Instant::now();
        let fps = last_done.map_or(0.0, |prev| {
            let dt = now.duration_since(prev).as_secs_f64();
            if dt > 0.0 { 1.0 / dt } else { 0.0 }
        });
        last_done = Some(now);

        if let Some(hub) = sinks.telemetry.as_deref_mut() {
            let every = pipeline.settings.thumbnail_every;
            let thumbnail = (every > 0 && seq.is_multiple_of(u64::from(every))).then(|| thumbnail_jpeg(&frame, 160)).flatten();
            hub.publish(&TelemetryEvent {
                seq,
                timestamp_ms: unix_ms(),
                frame_timestamp_ms: frame.timestamp_ms,
                mode: TelemetryEvent::mode(pipeline.state().mode),
                decision: outcome.decision.as_ref().map(DecisionView::from),
                bbox: outcome.detection.map(|d| BoxView::new(d.bbox, d.score)),
                center: outcome.detection.map(|d| [d.center.0, d.center.1]),
                command: command.into(),
                fps,
                thumbnail,
            });
        }
        seq += 1;
        summary.frames += 1;
    }

    let elapsed = started.elapsed().as_secs_f64();
    summary.mean_fps = if summary.frames > 0 && elapsed > 0.0 { summary.frames as f64 / elapsed } else { 0.0 };
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::source::VecSource;
    use crate::telemetry::MemoryHub;
    use palmcursor_core::synthetic::{self, palette_color};
    use palmcursor_core::{GestureLabel, Mode, RgbImage};

    fn settings() -> Settings {
        Settings::new(ScreenGeometry::new(1920, 1080, false, 1.0).unwrap())
    }

    fn pipeline() -> Pipeline {
        Pipeline::new(ModelSet::synthetic(), synthetic::reference_set(0.5), settings()).unwrap()
    }

    fn scene(seq: u64, hand: Option<[u8; 3]>) -> Frame {
        let mut img = RgbImage::filled(300, 300, [0, 0, 0]).unwrap();
        if let Some(c) = hand {
            img.fill_rect(120, 120, 60, 60, c);
        }
        Frame::new(img, seq, seq * 66)
    }

    fn run(p: &mut Pipeline, frames: Vec<Frame>, hub: &mut MemoryHub) -> (SessionSummary, SimulatedBackend) {
        let mut log = SimulatedBackend::new();
        let summary = run_session(
            p,
            &mut VecSource::new(frames),
            Sinks { log: &mut log, cursor: None, telemetry: Some(hub) },
            None,
        )
        .unwrap();
        (summary, log)
    }

    #[test]
    fn empty_frames_give_events_but_no_commands() {
        let mut hub = MemoryHub::new();
        let (summary, log) = run(&mut pipeline(), (0..10).map(|i| scene(i, None)).collect(), &mut hub);
        assert_eq!((summary.frames, summary.commands), (10, 0));
        assert!(log.log().is_empty());
        assert_eq!(hub.events.len(), 10);
        assert!(hub.events.iter().all(|e| e.decision.is_none() && e.bbox.is_none()));
        assert!(hub.events.iter().enumerate().all(|(i, e)| e.seq == i as u64));
    }

    #[test]
    fn palm_every_frame_turns_on_then_moves() {
        let mut hub = MemoryHub::new();
        let frames = (0..5).map(|i| scene(i, Some(palette_color(Gesture::Palm)))).collect();
        let (summary, log) = run(&mut pipeline(), frames, &mut hub);
        assert_eq!(summary.commands, 5);
        assert!(log.log().iter().all(|r| r.command == CursorCommand::Move { x: 960, y: 540 }));
        assert_eq!(hub.events[0].mode, "on");
        assert!(hub.events[0].thumbnail.is_some() && hub.events[1].thumbnail.is_none());
    }

    #[test]
    fn threshold_scale_zero_rejects_everything() {
        let mut hub = MemoryHub::with_script(vec![(2, r#"{"type":"set_threshold_scale","value":0.0}"#.into())]);
        let mut p = Pipeline::new(ModelSet::synthetic(), synthetic::reference_set(10.0), settings()).unwrap();
        let frames = (0..4).map(|i| scene(i, Some([0, 200, 0]))).collect();
        run(&mut p, frames, &mut hub);
        let labels: Vec<_> = hub.events.iter().map(|e| e.decision.as_ref().unwrap().label.clone()).collect();
        assert_eq!(labels, ["palm", "palm", "unknown", "unknown"]);
        assert!(hub.replies[0].1.contains("\"ack\""));
    }

    #[test]
    fn snapshots_then_rebuild_set_provenance() {
        let mut script: Vec<(u64, String)> =
            (1..=5).map(|i| (i, r#"{"type":"snapshot","class":"palm"}"#.to_string())).collect();
        script.push((6, r#"{"type":"rebuild_references"}"#.into()));
        let mut hub = MemoryHub::with_script(script);
        let mut p = pipeline();
        let frames = (0..7).map(|i| scene(i, Some(palette_color(Gesture::Palm)))).collect();
        run(&mut p, frames, &mut hub);
        assert_eq!(p.references().entry(Gesture::Palm).sample_count, 5);
        assert_eq!(p.references().entry(Gesture::Fist).sample_count, 1);
        assert!(hub.replies.iter().all(|(_, r)| r.contains("\"ack\"")), "{:?}", hub.replies);
    }

    #[test]
    fn bad_control_messages_change_nothing() {
        let mut hub = MemoryHub::with_script(vec![
            (0, r#"{"type":"rebuild_references"}"#.into()),
            (0, r#"{"type":"snapshot","class":"fist"}"#.into()),
            (1, r#"{"type":"set_dry_run","value":false}"#.into()),
            (1, "{oops".into()),
        ]);
        let mut p = pipeline();
        let before = (p.references().clone(), p.settings);
        run(&mut p, vec![scene(0, None), scene(1, None)], &mut hub);
        assert_eq!((p.references().clone(), p.settings), before);
        assert_eq!(hub.replies.len(), 4);
        assert!(hub.replies.iter().all(|(_, r)| r.contains("\"error\"")));
    }

    #[test]
    fn failing_frames_are_skipped() {
        let mut p = Pipeline::new(ModelSet::projection(3, 1).unwrap(), synthetic::reference_set(0.5), settings()).unwrap();
        p.models.detector = ModelSet::synthetic().classifier;
        let mut hub = MemoryHub::new();
        let (summary, _) = run(&mut p, vec![scene(0, Some([255, 0, 0])), scene(1, None)], &mut hub);
        assert_eq!((summary.frames, summary.errors), (2, 2));
        assert_eq!(p.state().mode, Mode::Off);
    }

    #[test]
    fn unknown_pose_produces_no_command() {
        let mut p = pipeline();
        let out = p.process_frame(&scene(0, Some(synthetic::UNKNOWN_COLOR))).unwrap();
        assert_eq!(out.decision.unwrap().label, GestureLabel::Unknown);
        assert_eq!(out.command, CursorCommand::None);
    }
}
