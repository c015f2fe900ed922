//! Pipeline settings. A flat TOML file uses the long CLI flag names with
//! underscores; flags given on the command line win over the file.
//!
//! ```toml
//! models = "models/"
//! references = "references.json"
//! replay = "session-01/"
//! dry_run = true
//! min_score = 0.6
//! mirror = false
//! serve = 8765
//! ```

use std::path::{Path, PathBuf};

use palmcursor_core::classifier::DecisionRule;
use palmcursor_core::cursor::{ControllerConfig, ScreenGeometry};
use serde::Deserialize;

use crate::pipeline::Settings;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config {path}: {reason}")]
    Parse { path: PathBuf, reason: String },
    #[error("missing required setting `{0}`")]
    Missing(&'static str),
    #[error("`camera` and `replay` are mutually exclusive")]
    TwoSources,
    #[error("`{name}` must be {range}, got {value}")]
    OutOfRange { name: &'static str, range: &'static str, value: String },
}

/// Every setting optional, as read from a config file or the command line.
#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunOptions {
    pub models: Option<PathBuf>,
    pub references: Option<PathBuf>,
    pub camera: Option<u32>,
    pub replay: Option<PathBuf>,
    pub dry_run: Option<bool>,
    pub min_score: Option<f32>,
    pub mirror: Option<bool>,
    pub alpha: Option<f64>,
    pub debounce: Option<u32>,
    pub cooldown: Option<u64>,
    pub serve: Option<u16>,
    pub strict_agreement: Option<bool>,
    pub fps_cap: Option<f64>,
    pub screen_width: Option<u32>,
    pub screen_height: Option<u32>,
    pub thumbnail_every: Option<u32>,
    pub log: Option<PathBuf>,
}

impl RunOptions {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.into(), source })?;
        toml::from_str(&text).map_err(|e| ConfigError::Parse { path: path.into(), reason: e.to_string() })
    }

    /// Settings from `self`, falling back to `base` where unset.
    pub fn over(self, base: RunOptions) -> RunOptions {
        let cli_source = (self.camera, self.replay.clone());
        macro_rules! pick {
            ($($f:ident),*) => { RunOptions { $($f: self.$f.or(base.$f)),* } };
        }
        let mut merged = pick!(
            models, references, camera, replay, dry_run, min_score, mirror, alpha, debounce, cooldown, serve,
            strict_agreement, fps_cap, screen_width, screen_height, thumbnail_every, log
        );
        // A source named on the command line replaces the file's source.
        if cli_source.0.is_some() || cli_source.1.is_some() {
            (merged.camera, merged.replay) = cli_source;
        }
        merged
    }

    pub fn resolve(self) -> Result<PipelineConfig, ConfigError> {
        let source = match (self.camera, self.replay) {
            (Some(_), Some(_)) => return Err(ConfigError::TwoSources),
            (Some(index), None) => SourceConfig::Camera(index),
            (None, Some(dir)) => SourceConfig::Replay(dir),
            (None, None) => SourceConfig::Camera(0),
        };
        let config = PipelineConfig {
            models: self.models.ok_or(ConfigError::Missing("models"))?,
            references: self.references.ok_or(ConfigError::Missing("references"))?,
            source,
            dry_run: self.dry_run.unwrap_or(false),
            min_score: self.min_score.unwrap_or(0.5),
            mirror: self.mirror.unwrap_or(true),
            alpha: self.alpha.unwrap_or(0.6),
            debounce: self.debounce.unwrap_or(3),
            cooldown_ms: self.cooldown.unwrap_or(700),
            serve: self.serve,
            strict_agreement: self.strict_agreement.unwrap_or(false),
            fps_cap: self.fps_cap,
            screen: (self.screen_width.unwrap_or(1920), self.screen_height.unwrap_or(1080)),
            thumbnail_every: self.thumbnail_every.unwrap_or(3),
            log: self.log,
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SourceConfig {
    Camera(u32),
    Replay(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub models: PathBuf,
    pub references: PathBuf,
    pub source: SourceConfig,
    pub dry_run: bool,
    pub min_score: f32,
    pub mirror: bool,
    pub alpha: f64,
    pub debounce: u32,
    pub cooldown_ms: u64,
    /// Telemetry port on loopback.
    pub serve: Option<u16>,
    pub strict_agreement: bool,
    /// Upper bound on processed frames per second.
    pub fps_cap: Option<f64>,
    pub screen: (u32, u32),
    /// Attach a thumbnail to every n-th telemetry event; 0 disables them.
    pub thumbnail_every: u32,
    /// Where to write the command log when the run ends.
    pub log: Option<PathBuf>,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let out = |name, range, value: String| Err(ConfigError::OutOfRange { name, range, value });
        if !(0.0..=1.0).contains(&self.min_score) {
            return out("min_score", "in [0, 1]", self.min_score.to_string());
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return out("alpha", "in (0, 1]", self.alpha.to_string());
        }
        if self.debounce == 0 {
            return out("debounce", "at least 1", "0".into());
        }
        if let Some(cap) = self.fps_cap.filter(|c| !(c.is_finite() && *c > 0.0)) {
            return out("fps_cap", "a positive number", cap.to_string());
        }
        if self.screen.0 == 0 || self.screen.1 == 0 {
            return out("screen_width/screen_height", "at least 1", format!("{}x{}", self.screen.0, self.screen.1));
        }
        Ok(())
    }

    pub fn settings(&self) -> Result<Settings, ConfigError> {
        let geometry = ScreenGeometry::new(self.screen.0, self.screen.1, self.mirror, self.alpha).map_err(|e| {
            ConfigError::OutOfRange { name: "screen/alpha", range: "a valid geometry", value: e.to_string() }
        })?;
        Ok(Settings {
            min_score: self.min_score,
            rule: DecisionRule { strict_agreement: self.strict_agreement },
            controller: ControllerConfig { debounce_frames: self.debounce, cooldown_ms: self.cooldown_ms },
            geometry,
            dry_run: self.dry_run,
            thumbnail_every: self.thumbnail_every,
        })
    }
}
