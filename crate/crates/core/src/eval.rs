//! Mode-level confusion matrices.
//!
//! Rows are predicted modes, columns are true modes; the normalized view
//! divides each column by its sample count so every populated column sums
//! to one. Aggregate accuracy is the unweighted mean of the normalized
//! diagonal over populated columns.

use core::fmt;

use crate::gesture::Gesture;

/// What a gesture does to the cursor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ControlMode {
    TurnOff = 0,
    TurnOn = 1,
    Click = 2,
    RClick = 3,
}

impl ControlMode {
    pub const ALL: [ControlMode; 4] = [ControlMode::TurnOff, ControlMode::TurnOn, ControlMode::Click, ControlMode::RClick];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            ControlMode::TurnOff => "Turn Off",
            ControlMode::TurnOn => "Turn On",
            ControlMode::Click => "Click",
            ControlMode::RClick => "R-click",
        }
    }
}

impl From<Gesture> for ControlMode {
    fn from(g: Gesture) -> Self {
        match g {
            Gesture::Fist => ControlMode::TurnOff,
            Gesture::Palm => ControlMode::TurnOn,
            Gesture::PointLeft => ControlMode::Click,
            Gesture::PointRight => ControlMode::RClick,
        }
    }
}

impl fmt::Display for ControlMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("{truth} true modes but {predicted} predictions")]
    LengthMismatch { truth: usize, predicted: usize },
    #[error("normalized matrix entry {value} at row {row}, column {col} is outside [0, 1]")]
    OutOfRange { row: usize, col: usize, value: alloc::string::String },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ConfusionMatrix {
    /// `counts[predicted][truth]`
    counts: [[u64; 4]; 4],
}

impl ConfusionMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_counts(counts: [[u64; 4]; 4]) -> Self {
        Self { counts }
    }

    pub fn from_runs(truth: &[ControlMode], predicted: &[ControlMode]) -> Result<Self, EvalError> {
        if truth.len() != predicted.len() {
            return Err(EvalError::LengthMismatch { truth: truth.len(), predicted: predicted.len() });
        }
        let mut m = Self::new();
        for (&t, &p) in truth.iter().zip(predicted) {
            m.record(t, p);
        }
        Ok(m)
    }

    pub fn record(&mut self, truth: ControlMode, predicted: ControlMode) {
        self.counts[predicted.index()][truth.index()] += 1;
    }

    pub fn counts(&self) -> &[[u64; 4]; 4] {
        &self.counts
    }

    pub fn column_count(&self, truth: ControlMode) -> u64 {
        self.counts.iter().map(|row| row[truth.index()]).sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn normalized(&self) -> NormalizedMatrix {
        let mut cells = [[None; 4]; 4];
        for col in 0..4 {
            let n = self.column_count(ControlMode::ALL[col]);
            if n == 0 {
                continue;
            }
            for (row, cell) in cells.iter_mut().enumerate() {
                cell[col] = Some(self.counts[row][col] as f64 / n as f64);
            }
        }
        NormalizedMatrix { cells }
    }

    pub fn aggregate_accuracy(&self) -> Option<f64> {
        self.normalized().aggregate_accuracy()
    }
}

/// Column-normalized view; `None` marks a column with no samples.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormalizedMatrix {
    cells: [[Option<f64>; 4]; 4],
}

impl NormalizedMatrix {
    /// Takes an already-normalized matrix, `rows[predicted][truth]`.
    pub fn from_rows(rows: [[f64; 4]; 4]) -> Result<Self, EvalError> {
        for (r, row) in rows.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&v) {
                    return Err(EvalError::OutOfRange { row: r, col: c, value: alloc::format!("{v}") });
                }
            }
        }
        Ok(Self { cells: rows.map(|row| row.map(Some)) })
    }

    pub fn get(&self, predicted: ControlMode, truth: ControlMode) -> Option<f64> {
        self.cells[predicted.index()][truth.index()]
    }

    pub fn cells(&self) -> &[[Option<f64>; 4]; 4] {
        &self.cells
    }

    pub fn aggregate_accuracy(&self) -> Option<f64> {
        let diag: alloc::vec::Vec<f64> = (0..4).filter_map(|i| self.cells[i][i]).collect();
        (!diag.is_empty()).then(|| diag.iter().sum::<f64>() / diag.len() as f64)
    }
}
