//! Evaluation runs and reports.
//!
//! A report is written as versioned JSON plus a `.txt` rendering laid out
//! like the classic results tables: one row per classifier, and the
//! mode-level confusion matrix with predicted modes as rows and true modes
//! as columns.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use palmcursor_core::classifier::{open_set_decide_with, DecisionRule, ReferenceSet};
use palmcursor_core::eval::{ConfusionMatrix, ControlMode, NormalizedMatrix};
use palmcursor_core::{measure_fps, FpsStats, Gesture, GestureLabel, ModelHandle};
use serde::{Deserialize, Serialize};

use crate::calibrate::{embed_sample, CalibrationError};
use crate::dataset::Sample;
use crate::pipeline::Pipeline;
use crate::recording::Recording;
use crate::source::SourceError;

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum EvaluationError {
    #[error("the {0} split has no samples")]
    EmptySplit(String),
    #[error(transparent)]
    Sample(#[from] CalibrationError),
    #[error(transparent)]
    Source(#[from] SourceError),
    #[error("frame {index}: unknown truth label `{label}`")]
    Truth { index: usize, label: String },
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("cannot read report {path}: {reason}")]
    Read { path: PathBuf, reason: String },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Accuracy {
    pub correct: usize,
    pub total: usize,
}

impl Accuracy {
    pub fn fraction(&self) -> f64 {
        self.correct as f64 / self.total as f64
    }
}

/// Fraction of `samples` whose label the classifier gets right. With
/// `gate`, the open-set decision is applied and a rejection counts as wrong.
pub fn classifier_accuracy<'a>(
    samples: impl IntoIterator<Item = &'a Sample>,
    classifier: &ModelHandle,
    gate: Option<(&ReferenceSet, DecisionRule)>,
) -> Result<Accuracy, EvaluationError> {
    let mut acc = Accuracy { correct: 0, total: 0 };
    for sample in samples {
        let (embedding, scores) = embed_sample(sample, classifier)?;
        let predicted = match gate {
            Some((refs, rule)) => open_set_decide_with(&embedding, &scores, refs, rule).label,
            None => GestureLabel::Known(scores.argmax),
        };
        acc.total += 1;
        acc.correct += usize::from(predicted == GestureLabel::Known(sample.class));
    }
    if acc.total == 0 {
        return Err(EvaluationError::EmptySplit("selected".into()));
    }
    Ok(acc)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixReport {
    /// `counts[predicted][truth]`.
    pub counts: [[u64; 4]; 4],
    /// Column-normalized counts; `null` for a column without samples.
    pub normalized: [[Option<f64>; 4]; 4],
    pub column_counts: [u64; 4],
    pub aggregate_accuracy: Option<f64>,
    /// Per true mode: samples the open-set gate rejected.
    pub rejected: [u64; 4],
    /// Per true mode: frames where no hand was detected.
    pub missed: [u64; 4],
}

/// Accumulates mode-level outcomes.
#[derive(Clone, Debug, Default)]
pub struct ModeTally {
    matrix: ConfusionMatrix,
    rejected: [u64; 4],
    missed: [u64; 4],
}

impl ModeTally {
    /// `predicted` is `None` when no hand was detected.
    pub fn record(&mut self, truth: Gesture, predicted: Option<GestureLabel>) {
        let t = ControlMode::from(truth);
        match predicted {
            Some(GestureLabel::Known(g)) => self.matrix.record(t, ControlMode::from(g)),
            Some(GestureLabel::Unknown) => self.rejected[t.index()] += 1,
            None => self.missed[t.index()] += 1,
        }
    }

    pub fn report(&self) -> MatrixReport {
        let normalized = self.matrix.normalized();
        MatrixReport {
            counts: *self.matrix.counts(),
            normalized: *normalized.cells(),
            column_counts: ControlMode::ALL.map(|m| self.matrix.column_count(m)),
            aggregate_accuracy: normalized.aggregate_accuracy(),
            rejected: self.rejected,
            missed: self.missed,
        }
    }
}

impl MatrixReport {
    /// Report for an already normalized matrix, without sample counts.
    pub fn from_normalized(matrix: &NormalizedMatrix) -> Self {
        Self {
            counts: [[0; 4]; 4],
            normalized: *matrix.cells(),
            column_counts: [0; 4],
            aggregate_accuracy: matrix.aggregate_accuracy(),
            rejected: [0; 4],
            missed: [0; 4],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierReport {
    pub model: String,
    pub parameters: String,
    pub split: String,
    pub samples: usize,
    pub accuracy: f64,
    pub gated_accuracy: f64,
    /// Mean forward-pass time per image.
    pub run_time_us: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FpsReport {
    pub mean_interval_ms: f64,
    pub p95_interval_ms: f64,
    pub mean_fps: f64,
}

impl From<FpsStats> for FpsReport {
    fn from(s: FpsStats) -> Self {
        Self { mean_interval_ms: s.mean_interval_ms, p95_interval_ms: s.p95_interval_ms, mean_fps: s.mean_fps }
    }
}

/// Frame-rate statistics from completion times in microseconds.
fn fps_from_micros(times_us: &[u64]) -> Option<FpsReport> {
    let s = measure_fps(times_us).ok()?;
    if s.mean_interval_ms <= 0.0 {
        return None;
    }
    Some(FpsReport {
        mean_interval_ms: s.mean_interval_ms / 1000.0,
        p95_interval_ms: s.p95_interval_ms / 1000.0,
        mean_fps: s.mean_fps * 1000.0,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub version: u32,
    /// What was evaluated, e.g. `dataset:test` or `recording`.
    pub source: String,
    pub samples: u64,
    pub matrix: MatrixReport,
    /// One matrix per `tag=value` capture condition.
    pub conditions: BTreeMap<String, MatrixReport>,
    pub classifier: Option<ClassifierReport>,
    pub fps: Option<FpsReport>,
}

struct Tallies {
    all: ModeTally,
    conditions: BTreeMap<String, ModeTally>,
}

impl Tallies {
    fn new() -> Self {
        Self { all: ModeTally::default(), conditions: BTreeMap::new() }
    }

    fn record(&mut self, truth: Gesture, predicted: Option<GestureLabel>, tags: &BTreeMap<String, String>) {
        self.all.record(truth, predicted);
        for (k, v) in tags {
            self.conditions.entry(format!("{k}={v}")).or_default().record(truth, predicted);
        }
    }

    fn conditions(&self) -> BTreeMap<String, MatrixReport> {
        self.conditions.iter().map(|(k, t)| (k.clone(), t.report())).collect()
    }
}

/// Classifies each dataset sample through the open-set gate.
pub fn evaluate_samples(
    samples: &[&Sample],
    split_name: &str,
    classifier: &ModelHandle,
    refs: &ReferenceSet,
    rule: DecisionRule,
) -> Result<EvalReport, EvaluationError> {
    if samples.is_empty() {
        return Err(EvaluationError::EmptySplit(split_name.into()));
    }
    let mut tallies = Tallies::new();
    let (mut argmax_correct, mut gated_correct) = (0, 0);
    let mut forward_us = 0u128;
    let mut done_us = Vec::with_capacity(samples.len());
    let start = Instant::now();
    for sample in samples {
        let t = Instant::now();
        let (embedding, scores) = embed_sample(sample, classifier)?;
        forward_us += t.elapsed().as_micros();
        let decision = open_set_decide_with(&embedding, &scores, refs, rule);
        argmax_correct += usize::from(scores.argmax == sample.class);
        gated_correct += usize::from(decision.label == GestureLabel::Known(sample.class));
        tallies.record(sample.class, Some(decision.label), &sample.conditions);
        done_us.push(start.elapsed().as_micros() as u64);
    }
    let n = samples.len();
    let meta = classifier.metadata();
    Ok(EvalReport {
        version: REPORT_VERSION,
        source: format!("dataset:{split_name}"),
        samples: n as u64,
        matrix: tallies.all.report(),
        conditions: tallies.conditions(),
        classifier: Some(ClassifierReport {
            model: meta.get("model_name").cloned().unwrap_or_default(),
            parameters: meta.get("parameter_count").cloned().unwrap_or_default(),
            split: split_name.into(),
            samples: n,
            accuracy: argmax_correct as f64 / n as f64,
            gated_accuracy: gated_correct as f64 / n as f64,
            run_time_us: forward_us as f64 / n as f64,
        }),
        fps: fps_from_micros(&done_us),
    })
}

/// Runs an annotated recording through the pipeline. Frames whose truth is
/// a gesture enter the matrix; `none`, `unknown` and unannotated frames are
/// processed but not scored.
pub fn evaluate_recording(pipeline: &mut Pipeline, recording: &Recording) -> Result<EvalReport, EvaluationError> {
    let mut tallies = Tallies::new();
    let mut done_us = Vec::with_capacity(recording.len());
    let mut scored = 0;
    let start = Instant::now();
    for (index, entry) in recording.manifest().frames.iter().enumerate() {
        let frame = recording.frame(index).map_err(SourceError::from)?;
        let outcome = pipeline.process_frame(&frame).unwrap_or_else(|e| {
            log::warn!("frame {index}: {e}");
            crate::pipeline::FrameOutcome {
                detection: None,
                decision: None,
                command: palmcursor_core::CursorCommand::None,
            }
        });
        done_us.push(start.elapsed().as_micros() as u64);
        let truth = match entry.truth.as_deref() {
            None | Some("none") | Some("unknown") => continue,
            Some(name) => name
                .parse::<Gesture>()
                .map_err(|_| EvaluationError::Truth { index, label: name.to_string() })?,
        };
        scored += 1;
        tallies.record(truth, outcome.decision.map(|d| d.label), &entry.tags);
    }
    if scored == 0 {
        return Err(EvaluationError::EmptySplit("annotated recording".into()));
    }
    Ok(EvalReport {
        version: REPORT_VERSION,
        source: "recording".into(),
        samples: scored,
        matrix: tallies.all.report(),
        conditions: tallies.conditions(),
        classifier: None,
        fps: fps_from_micros(&done_us),
    })
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |v| format!("{v:.4}"))
}

fn render_matrix(out: &mut String, m: &MatrixReport) {
    let _ = write!(out, "{:<10}", "");
    for mode in ControlMode::ALL {
        let _ = write!(out, "{:>10}", mode.name());
    }
    out.push('\n');
    for pred in ControlMode::ALL {
        let _ = write!(out, "{:<10}", pred.name());
        for truth in ControlMode::ALL {
            let v = m.normalized[pred.index()][truth.index()];
            let _ = write!(out, "{:>10}", cell(v));
        }
        out.push('\n');
    }
    let mut row = |name: &str, values: &[u64; 4]| {
        let _ = write!(out, "{name:<10}");
        for v in values {
            let _ = write!(out, "{v:>10}");
        }
        out.push('\n');
    };
    row("samples", &m.column_counts);
    row("rejected", &m.rejected);
    row("missed", &m.missed);
    match m.aggregate_accuracy {
        Some(a) => {
            let _ = writeln!(out, "Aggregate accuracy: {a:.5} ({:.2}%)", a * 100.0);
        }
        None => out.push_str("Aggregate accuracy: n/a\n"),
    }
}

/// Human-readable tables.
pub fn render_text(report: &EvalReport) -> String {
    let mut out = String::new();
    if let Some(c) = &report.classifier {
        out.push_str("Performance of the classifier\n");
        let _ = writeln!(out, "{:<24}{:>10}{:>12}{:>14}{:>16}", "Network", "Accuracy", "Gated", "Parameters", "Run-time");
        let _ = writeln!(
            out,
            "{:<24}{:>9.2}%{:>11.2}%{:>14}{:>16}",
            c.model,
            c.accuracy * 100.0,
            c.gated_accuracy * 100.0,
            c.parameters,
            format!("{:.0}us/step", c.run_time_us)
        );
        let _ = writeln!(out, "({} {} samples)\n", c.samples, c.split);
    }
    let _ = writeln!(out, "Confusion matrix for each mode ({}, {} samples; columns are true modes)", report.source, report.samples);
    render_matrix(&mut out, &report.matrix);
    for (condition, m) in &report.conditions {
        let _ = writeln!(out, "\nCondition {condition}");
        render_matrix(&mut out, m);
    }
    if let Some(f) = &report.fps {
        let _ = writeln!(
            out,
            "\nFrame rate: {:.1} FPS (mean interval {:.2} ms, p95 {:.2} ms)",
            f.mean_fps, f.mean_interval_ms, f.p95_interval_ms
        );
    }
    out
}

/// Writes `path` as JSON and the text tables next to it with a `.txt`
/// extension. Returns the text file's path.
pub fn render_report(report: &EvalReport, path: &Path) -> Result<PathBuf, EvaluationError> {
    let write = |p: &Path, text: String| {
        if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|source| EvaluationError::Write { path: dir.into(), source })?;
        }
        fs::write(p, text).map_err(|source| EvaluationError::Write { path: p.into(), source })
    };
    write(path, serde_json::to_string_pretty(report).expect("reports always serialize") + "\n")?;
    let txt = path.with_extension("txt");
    write(&txt, render_text(report))?;
    Ok(txt)
}

pub fn load_report(path: &Path) -> Result<EvalReport, EvaluationError> {
    let read = |reason: String| EvaluationError::Read { path: path.into(), reason };
    let text = fs::read_to_string(path).map_err(|e| read(e.to_string()))?;
    let report: EvalReport = serde_json::from_str(&text).map_err(|e| read(e.to_string()))?;
    if report.version != REPORT_VERSION {
        return Err(read(format!("version {} is not {REPORT_VERSION}", report.version)));
    }
    Ok(report)
}
