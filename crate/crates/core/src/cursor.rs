//! On/off cursor controller.
//!
//! | mode | accepted label | next mode | command                          |
//! |------|----------------|-----------|----------------------------------|
//! | Off  | palm           | On        | move to the mapped center        |
//! | Off  | anything else  | Off       | none                             |
//! | On   | palm           | On        | move toward the mapped center    |
//! | On   | point left     | On        | click, once debounced            |
//! | On   | point right    | On        | right click, once debounced      |
//! | On   | fist           | Off       | none                             |
//! | On   | unknown        | On        | none                             |
//!
//! A click needs `debounce_frames` consecutive accepted frames of the same
//! label and `cooldown_ms` since that button last fired. Unknown frames and
//! frames without a hand restart the consecutive count. While off, nothing
//! but a palm changes the state.

use core::fmt;

use crate::classifier::GestureDecision;
use crate::gesture::{Gesture, GestureLabel};
use crate::DETECTOR_SIZE;

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum ControllerError {
    #[error("accepted decision without a hand center")]
    MissingCenter,
    #[error("invalid screen geometry {width}x{height}")]
    InvalidGeometry { width: u32, height: u32 },
    #[error("smoothing factor {0} outside (0, 1]")]
    InvalidAlpha(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScreenGeometry {
    width: u32,
    height: u32,
    pub mirror_x: bool,
    alpha: f64,
}

impl ScreenGeometry {
    pub fn new(width: u32, height: u32, mirror_x: bool, alpha: f64) -> Result<Self, ControllerError> {
        if width == 0 || height == 0 {
            return Err(ControllerError::InvalidGeometry { width, height });
        }
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(ControllerError::InvalidAlpha(alpha));
        }
        Ok(Self { width, height, mirror_x, alpha })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

/// Maps a detector-space center to screen pixels: scale, mirror, clamp, floor.
pub fn map_coordinate(center: (f64, f64), geom: &ScreenGeometry) -> (u32, u32) {
    let side = DETECTOR_SIZE as f64;
    let (w, h) = (geom.width as f64, geom.height as f64);
    let mut x = center.0 * w / side;
    let y = center.1 * h / side;
    if geom.mirror_x {
        x = w - 1.0 - x;
    }
    let x = libm::floor(x.clamp(0.0, w - 1.0));
    let y = libm::floor(y.clamp(0.0, h - 1.0));
    (x as u32, y as u32)
}

/// One exponential-moving-average step toward `target`, rounded to pixels.
pub fn smooth(previous: (u32, u32), target: (u32, u32), alpha: f64) -> (u32, u32) {
    let step = |p: u32, t: u32| libm::round(p as f64 + alpha * (t as f64 - p as f64)) as u32;
    (step(previous.0, target.0), step(previous.1, target.1))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    Off,
    On,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Off => "off",
            Mode::On => "on",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CursorCommand {
    Move { x: u32, y: u32 },
    Click,
    RightClick,
    None,
}

impl CursorCommand {
    pub fn name(&self) -> &'static str {
        match self {
            CursorCommand::Move { .. } => "move",
            CursorCommand::Click => "click",
            CursorCommand::RightClick => "right_click",
            CursorCommand::None => "none",
        }
    }

    pub fn is_none(&self) -> bool {
        matches!(self, CursorCommand::None)
    }
}

impl fmt::Display for CursorCommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CursorCommand::Move { x, y } => write!(f, "move({x},{y})"),
            other => f.write_str(other.name()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ControllerConfig {
    /// Consecutive identical accepted frames required before a click.
    pub debounce_frames: u32,
    /// Minimum time between two clicks of the same button.
    pub cooldown_ms: u64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self { debounce_frames: 3, cooldown_ms: 700 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Button {
    Left = 0,
    Right = 1,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ControllerState {
    pub mode: Mode,
    /// Most recent accepted label and how many frames in a row it was seen.
    pub streak: Option<(Gesture, u32)>,
    /// Timestamp of the last left and right click.
    pub last_click_ms: [Option<u64>; 2],
    /// Last cursor position emitted, the smoothing origin.
    pub cursor: Option<(u32, u32)>,
}

impl Default for ControllerState {
    fn default() -> Self {
        Self::new()
    }
}

impl ControllerState {
    pub const fn new() -> Self {
        Self { mode: Mode::Off, streak: None, last_click_ms: [None, None], cursor: None }
    }

    /// Frame without a qualifying hand: no command, debounce restarts.
    pub fn no_hand(&self) -> ControllerState {
        match self.mode {
            Mode::Off => *self,
            Mode::On => ControllerState { streak: None, ..*self },
        }
    }

    /// Advances the controller by one classified frame.
    pub fn step(
        &self,
        decision: &GestureDecision,
        center: Option<(f64, f64)>,
        geom: &ScreenGeometry,
        config: &ControllerConfig,
        now_ms: u64,
    ) -> Result<(ControllerState, CursorCommand), ControllerError> {
        self.step_label(decision.label, center, geom, config, now_ms)
    }

    /// [`ControllerState::step`] on a bare label.
    pub fn step_label(
        &self,
        label: GestureLabel,
        center: Option<(f64, f64)>,
        geom: &ScreenGeometry,
        config: &ControllerConfig,
        now_ms: u64,
    ) -> Result<(ControllerState, CursorCommand), ControllerError> {
        let mut next = *self;
        let gesture = match label {
            GestureLabel::Known(g) => g,
            GestureLabel::Unknown if self.mode == Mode::Off => return Ok((next, CursorCommand::None)),
            GestureLabel::Unknown => {
                next.streak = None;
                return Ok((next, CursorCommand::None));
            }
        };
        let center = center.ok_or(ControllerError::MissingCenter)?;
        if self.mode == Mode::Off && gesture != Gesture::Palm {
            return Ok((next, CursorCommand::None));
        }
        next.streak = match self.streak {
            Some((g, n)) if g == gesture => Some((g, n.saturating_add(1))),
            _ => Some((gesture, 1)),
        };

        let command = match (self.mode, gesture) {
            (Mode::Off, Gesture::Palm) => {
                let target = map_coordinate(center, geom);
                next.mode = Mode::On;
                next.cursor = Some(target);
                CursorCommand::Move { x: target.0, y: target.1 }
            }
            (Mode::Off, _) => CursorCommand::None,
            (Mode::On, Gesture::Palm) => {
                let target = map_coordinate(center, geom);
                let (x, y) = match self.cursor {
                    Some(prev) => smooth(prev, target, geom.alpha),
                    None => target,
                };
                next.cursor = Some((x, y));
                CursorCommand::Move { x, y }
            }
            (Mode::On, Gesture::PointLeft) => next.try_click(Button::Left, config, now_ms),
            (Mode::On, Gesture::PointRight) => next.try_click(Button::Right, config, now_ms),
            (Mode::On, Gesture::Fist) => {
                next.mode = Mode::Off;
                CursorCommand::None
            }
        };
        Ok((next, command))
    }

    fn try_click(&mut self, button: Button, config: &ControllerConfig, now_ms: u64) -> CursorCommand {
        let held = self.streak.map_or(0, |(_, n)| n);
        let cooled = match self.last_click_ms[button as usize] {
            Some(t) => now_ms.saturating_sub(t) >= config.cooldown_ms,
            None => true,
        };
        if held < config.debounce_frames || !cooled {
            return CursorCommand::None;
        }
        self.last_click_ms[button as usize] = Some(now_ms);
        match button {
            Button::Left => CursorCommand::Click,
            Button::Right => CursorCommand::RightClick,
        }
    }
}
