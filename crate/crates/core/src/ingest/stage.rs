use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Number of scoreable sleep stages.
pub const NUM_CLASSES: usize = 5;

/// AASM sleep stage of one 30-s epoch. `Unknown` marks unscoreable epochs and
/// is dropped before anything reaches the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StageLabel {
    W,
    N1,
    N2,
    N3,
    #[serde(rename = "REM")]
    Rem,
    #[serde(rename = "UNKNOWN")]
    Unknown,
}

impl StageLabel {
    pub const SCOREABLE: [StageLabel; NUM_CLASSES] =
        [StageLabel::W, StageLabel::N1, StageLabel::N2, StageLabel::N3, StageLabel::Rem];

    /// Class index `0..5`, or `None` for `Unknown`.
    pub fn index(self) -> Option<usize> {
        match self {
            StageLabel::W => Some(0),
            StageLabel::N1 => Some(1),
            StageLabel::N2 => Some(2),
            StageLabel::N3 => Some(3),
            StageLabel::Rem => Some(4),
            StageLabel::Unknown => None,
        }
    }

    pub fn from_index(i: usize) -> Option<StageLabel> {
        Self::SCOREABLE.get(i).copied()
    }

    pub fn is_scoreable(self) -> bool {
        self != StageLabel::Unknown
    }

    pub fn as_str(self) -> &'static str {
        match self {
            StageLabel::W => "W",
            StageLabel::N1 => "N1",
            StageLabel::N2 => "N2",
            StageLabel::N3 => "N3",
            StageLabel::Rem => "REM",
            StageLabel::Unknown => "?",
        }
    }
}

impl fmt::Display for StageLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Error for a token outside the accepted stage vocabulary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownStageToken(pub String);

impl FromStr for StageLabel {
    type Err = UnknownStageToken;

    /// Accepts AASM names and the older R&K names, merging S3/S4 into N3.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let token = s.trim();
        Ok(match token.to_ascii_uppercase().as_str() {
            "W" | "WAKE" => StageLabel::W,
            "N1" | "S1" => StageLabel::N1,
            "N2" | "S2" => StageLabel::N2,
            "N3" | "S3" | "S4" => StageLabel::N3,
            "REM" | "R" => StageLabel::Rem,
            "?" | "MOVEMENT" | "UNKNOWN" => StageLabel::Unknown,
            _ => return Err(UnknownStageToken(token.to_string())),
        })
    }
}
