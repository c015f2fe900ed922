use core::fmt;
use core::str::FromStr;

/// One of the four trained gesture classes, in the fixed class order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Gesture {
    Fist = 0,
    Palm = 1,
    PointLeft = 2,
    PointRight = 3,
}

impl Gesture {
    /// Class order used for logits, references and matrix rows.
    pub const ALL: [Gesture; 4] = [Gesture::Fist, Gesture::Palm, Gesture::PointLeft, Gesture::PointRight];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Snake-case name used in files and on the wire.
    pub fn name(self) -> &'static str {
        match self {
            Gesture::Fist => "fist",
            Gesture::Palm => "palm",
            Gesture::PointLeft => "point_left",
            Gesture::PointRight => "point_right",
        }
    }
}

impl fmt::Display for Gesture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown gesture class `{0}`")]
pub struct UnknownClass(pub alloc::string::String);

impl FromStr for Gesture {
    type Err = UnknownClass;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|g| g.name() == s).ok_or_else(|| UnknownClass(s.into()))
    }
}

/// Outcome of the open-set gate: a defined gesture, or `Unknown`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GestureLabel {
    Known(Gesture),
    Unknown,
}

impl GestureLabel {
    pub const ALL: [GestureLabel; 5] = [
        GestureLabel::Known(Gesture::Fist),
        GestureLabel::Known(Gesture::Palm),
        GestureLabel::Known(Gesture::PointLeft),
        GestureLabel::Known(Gesture::PointRight),
        GestureLabel::Unknown,
    ];

    pub fn gesture(self) -> Option<Gesture> {
        match self {
            GestureLabel::Known(g) => Some(g),
            GestureLabel::Unknown => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GestureLabel::Known(g) => g.name(),
            GestureLabel::Unknown => "unknown",
        }
    }
}

impl From<Gesture> for GestureLabel {
    fn from(g: Gesture) -> Self {
        GestureLabel::Known(g)
    }
}

impl fmt::Display for GestureLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GestureLabel {
    type Err = UnknownClass;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "unknown" {
            Ok(GestureLabel::Unknown)
        } else {
            s.parse().map(GestureLabel::Known)
        }
    }
}
