use serde::{Deserialize, Serialize};

use super::SessionError;

pub const MIN_LEVEL: u8 = 1;
pub const MAX_LEVEL: u8 = 5;

/// Intensity ladder: (reps per set, tempo in seconds per rep).
const LADDER: [(u32, f64); 5] = [(8, 4.0), (10, 4.0), (10, 3.0), (12, 3.0), (15, 3.0)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct IntensityLevel(u8);

impl IntensityLevel {
    pub fn new(level: u8) -> Result<Self, SessionError> {
        if (MIN_LEVEL..=MAX_LEVEL).contains(&level) {
            Ok(Self(level))
        } else {
            Err(SessionError::Parameter(format!(
                "intensity level {level} outside [{MIN_LEVEL}, {MAX_LEVEL}]"
            )))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }

    pub fn reps_per_set(self) -> u32 {
        LADDER[self.0 as usize - 1].0
    }

    pub fn tempo_s(self) -> f64 {
        LADDER[self.0 as usize - 1].1
    }

    pub fn step_down(self) -> Self {
        Self(self.0.saturating_sub(1).max(MIN_LEVEL))
    }

    pub fn step_up(self, ceiling: IntensityLevel) -> Self {
        Self((self.0 + 1).min(ceiling.0))
    }
}

impl TryFrom<u8> for IntensityLevel {
    type Error = SessionError;
    fn try_from(v: u8) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<IntensityLevel> for u8 {
    fn from(l: IntensityLevel) -> u8 {
        l.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Regimen {
    #[serde(default = "default_sets")]
    pub sets: u32,
    /// Rest between sets, seconds.
    #[serde(default = "default_rest")]
    pub rest_s: u32,
    #[serde(default = "default_start")]
    pub start_level: u8,
    #[serde(default = "default_max")]
    pub max_level: u8,
}

fn default_sets() -> u32 {
    3
}
fn default_rest() -> u32 {
    90
}
fn default_start() -> u8 {
    2
}
fn default_max() -> u8 {
    MAX_LEVEL
}

impl Default for Regimen {
    fn default() -> Self {
        Self {
            sets: default_sets(),
            rest_s: default_rest(),
            start_level: default_start(),
            max_level: default_max(),
        }
    }
}

impl Regimen {
    pub fn validate(&self) -> Result<(), SessionError> {
        if self.sets < 1 {
            return Err(SessionError::Validation("regimen needs at least one set".into()));
        }
        if !(MIN_LEVEL <= self.start_level
            && self.start_level <= self.max_level
            && self.max_level <= MAX_LEVEL)
        {
            return Err(SessionError::Validation(format!(
                "levels must satisfy 1 <= start_level ({}) <= max_level ({}) <= 5",
                self.start_level, self.max_level
            )));
        }
        Ok(())
    }

    pub fn start(&self) -> IntensityLevel {
        IntensityLevel(self.start_level.clamp(MIN_LEVEL, MAX_LEVEL))
    }

    pub fn ceiling(&self) -> IntensityLevel {
        IntensityLevel(self.max_level.clamp(MIN_LEVEL, MAX_LEVEL))
    }
}
