//! Adaptive exercise session: air-quality gate, regimen execution,
//! vitals-driven intensity changes, and the pause/abort safety rules.

mod adjust;
mod air;
mod controller;
mod regimen;
mod summary;

pub use adjust::{adjust_intensity, AdjustReason, Adjustment, SafetyConfig, SetVitals};
pub use air::{classify_air, AirBand, AirQualitySample};
pub use controller::{
    level_change_arg, ControllerCommand, Diagnostic, LevelReason, PauseReason, PausedFrom, Phase,
    SessionEvent, SessionInput, SessionState, StepOutput, USER_ARG,
};
pub use regimen::{IntensityLevel, Regimen, MAX_LEVEL, MIN_LEVEL};
pub use summary::{summarize, Outcome, SessionSummary};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SessionError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("malformed log: {0}")]
    Log(String),
}
