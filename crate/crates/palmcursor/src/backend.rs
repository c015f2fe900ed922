//! Cursor backends. The simulated backend keeps an ordered log whose text
//! form is one `seq,timestamp_ms,command,x,y` record per line; `x` and `y`
//! are empty for clicks.

use std::fmt::Write as _;

use palmcursor_core::CursorCommand;

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("cursor backend unavailable: {0}")]
    Unavailable(String),
    #[error("cursor event injection failed: {0}")]
    Inject(String),
}

#[derive(Debug, thiserror::Error)]
#[error("line {line}: {reason}")]
pub struct LogParseError {
    pub line: usize,
    pub reason: String,
}

/// One dispatched command.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LogRecord {
    pub seq: u64,
    pub timestamp_ms: u64,
    pub command: CursorCommand,
}

impl LogRecord {
    pub fn to_line(&self) -> String {
        let (x, y) = match self.command {
            CursorCommand::Move { x, y } => (x.to_string(), y.to_string()),
            _ => (String::new(), String::new()),
        };
        format!("{},{},{},{x},{y}", self.seq, self.timestamp_ms, self.command.name())
    }

    pub fn parse_line(line: &str) -> Result<Self, String> {
        let fields: Vec<&str> = line.split(',').collect();
        let [seq, ts, name, x, y] = fields[..] else {
            return Err(format!("expected 5 fields, found {}", fields.len()));
        };
        let num = |s: &str, what: &str| s.parse::<u64>().map_err(|_| format!("bad {what} `{s}`"));
        let coord = |s: &str, what: &str| s.parse::<u32>().map_err(|_| format!("bad {what} `{s}`"));
        let command = match name {
            "move" => CursorCommand::Move { x: coord(x, "x")?, y: coord(y, "y")? },
            "click" => CursorCommand::Click,
            "right_click" => CursorCommand::RightClick,
            other => return Err(format!("unknown command `{other}`")),
        };
        if !matches!(command, CursorCommand::Move { .. }) && !(x.is_empty() && y.is_empty()) {
            return Err(format!("{name} takes no coordinates"));
        }
        Ok(Self { seq: num(seq, "seq")?, timestamp_ms: num(ts, "timestamp")?, command })
    }
}

pub fn format_log(records: &[LogRecord]) -> String {
    records.iter().fold(String::new(), |mut out, r| {
        let _ = writeln!(out, "{}", r.to_line());
        out
    })
}

pub fn parse_log(text: &str) -> Result<Vec<LogRecord>, LogParseError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| LogRecord::parse_line(l.trim()).map_err(|reason| LogParseError { line: i + 1, reason }))
        .collect()
}

pub trait CursorBackend: Send {
    /// Dispatches one command. `None` is accepted and ignored.
    fn apply(&mut self, seq: u64, timestamp_ms: u64, command: CursorCommand) -> Result<(), BackendError>;
}

/// Records commands instead of moving the pointer.
#[derive(Clone, Debug, Default)]
pub struct SimulatedBackend {
    log: Vec<LogRecord>,
}

impl SimulatedBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn log(&self) -> &[LogRecord] {
        &self.log
    }

    pub fn to_text(&self) -> String {
        format_log(&self.log)
    }
}

impl CursorBackend for SimulatedBackend {
    fn apply(&mut self, seq: u64, timestamp_ms: u64, command: CursorCommand) -> Result<(), BackendError> {
        if !command.is_none() {
            self.log.push(LogRecord { seq, timestamp_ms, command });
        }
        Ok(())
    }
}

/// Injects real pointer events through the desktop session.
#[cfg(feature = "os-cursor")]
pub struct OsBackend {
    enigo: enigo::Enigo,
}

#[cfg(feature = "os-cursor")]
impl OsBackend {
    pub fn connect() -> Result<Self, BackendError> {
        let enigo = enigo::Enigo::new(&enigo::Settings::default()).map_err(|e| BackendError::Unavailable(e.to_string()))?;
        Ok(Self { enigo })
    }
}

#[cfg(feature = "os-cursor")]
impl CursorBackend for OsBackend {
    fn apply(&mut self, _seq: u64, _timestamp_ms: u64, command: CursorCommand) -> Result<(), BackendError> {
        use enigo::{Button, Coordinate, Direction, Mouse};
        let inject = |e: enigo::InputError| BackendError::Inject(e.to_string());
        match command {
            CursorCommand::Move { x, y } => self.enigo.move_mouse(x as i32, y as i32, Coordinate::Abs).map_err(inject),
            CursorCommand::Click => self.enigo.button(Button::Left, Direction::Click).map_err(inject),
            CursorCommand::RightClick => self.enigo.button(Button::Right, Direction::Click).map_err(inject),
            CursorCommand::None => Ok(()),
        }
    }
}

#[cfg(not(feature = "os-cursor"))]
pub struct OsBackend(());

#[cfg(not(feature = "os-cursor"))]
impl OsBackend {
    pub fn connect() -> Result<Self, BackendError> {
        Err(BackendError::Unavailable("built without the `os-cursor` feature".into()))
    }
}

#[cfg(not(feature = "os-cursor"))]
impl CursorBackend for OsBackend {
    fn apply(&mut self, _seq: u64, _timestamp_ms: u64, _command: CursorCommand) -> Result<(), BackendError> {
        Err(BackendError::Unavailable("built without the `os-cursor` feature".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn records_in_order_and_skips_none() {
        let mut b = SimulatedBackend::new();
        b.apply(1, 66, CursorCommand::Move { x: 10, y: 10 }).unwrap();
        b.apply(2, 132, CursorCommand::None).unwrap();
        b.apply(3, 198, CursorCommand::Click).unwrap();
        let commands: Vec<_> = b.log().iter().map(|r| r.command).collect();
        assert_eq!(commands, [CursorCommand::Move { x: 10, y: 10 }, CursorCommand::Click]);
        assert_eq!(b.to_text(), "1,66,move,10,10\n3,198,click,,\n");
    }

    #[test]
    fn rejects_bad_lines() {
        for bad in ["1,2,move,3", "1,2,jump,,", "x,2,click,,", "1,2,click,4,5", "1,2,move,,"] {
            assert!(parse_log(bad).is_err(), "{bad}");
        }
    }

    fn command() -> impl Strategy<Value = CursorCommand> {
        prop_oneof![
            (0u32..4000, 0u32..3000).prop_map(|(x, y)| CursorCommand::Move { x, y }),
            Just(CursorCommand::Click),
            Just(CursorCommand::RightClick),
        ]
    }

    proptest! {
        #[test]
        fn log_preserves_every_command(cmds in prop::collection::vec(command(), 100)) {
            let mut b = SimulatedBackend::new();
            for (i, c) in cmds.iter().enumerate() {
                b.apply(i as u64, i as u64 * 66, *c).unwrap();
            }
            prop_assert_eq!(b.log().len(), 100);
            let parsed = parse_log(&b.to_text()).unwrap();
            prop_assert_eq!(parsed.as_slice(), b.log());
            prop_assert!(parsed.iter().map(|r| r.command).eq(cmds.iter().copied()));
        }
    }
}
