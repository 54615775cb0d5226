//! Streaming estimators: repetitions from the accelerometer, SpO2, respiratory
//! rate and heart rate from the dual-channel PPG.
//!
//! Every estimator is total over finite input. A window that cannot support a
//! measurement yields a [`VitalsReading`] with a non-`Valid` [`Quality`]
//! rather than an error; errors are reserved for contract violations such as
//! a window that is too short or a timestamp going backwards.

mod filter;
mod hr;
mod rep;
mod rr;
mod spo2;

pub use filter::{bandlimit, detrend_linear, percentile};
pub use hr::{beat_times, hr_from_window, hr_from_window_with, HrConfig};
pub use rep::{RepCounter, RepCounterConfig, RepEvent};
pub use rr::{rr_from_window, rr_from_window_with, RrConfig};
pub use spo2::{ratio_of_ratios, spo2_from_window, Spo2Calibration};

use serde::{Deserialize, Serialize};

pub const ACCEL_FS_HZ: f64 = 50.0;
pub const PPG_FS_HZ: f64 = 100.0;
pub const SPO2_WINDOW_S: f64 = 4.0;
pub const HR_WINDOW_S: f64 = 4.0;
pub const RR_WINDOW_S: f64 = 30.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DspError {
    #[error("timestamp {got} ms does not follow {prev} ms")]
    InputOrder { prev: u32, got: u32 },
    #[error("window spans {got_s:.2} s, estimator needs {required_s:.2} s")]
    WindowTooShort { required_s: f64, got_s: f64 },
    #[error("window sample spacing deviates from {expected_ms:.2} ms by more than 1 ms")]
    NonUniformWindow { expected_ms: f64 },
    #[error("invalid parameter: {0}")]
    Parameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccelSample {
    pub t_ms: u32,
    pub x: i16,
    pub y: i16,
    pub z: i16,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PpgSample {
    pub t_ms: u32,
    pub red: u16,
    pub ir: u16,
}

/// A borrowed run of uniformly spaced PPG samples.
#[derive(Debug, Clone, Copy)]
pub struct PpgWindow<'a> {
    pub samples: &'a [PpgSample],
    pub fs_hz: f64,
}

impl<'a> PpgWindow<'a> {
    pub fn new(samples: &'a [PpgSample], fs_hz: f64) -> Self {
        Self { samples, fs_hz }
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.fs_hz
    }

    pub fn end_ms(&self) -> u32 {
        self.samples.last().map_or(0, |s| s.t_ms)
    }

    /// Checks the length and spacing preconditions shared by the estimators.
    pub(crate) fn check(&self, required_s: f64) -> Result<(), DspError> {
        if !(self.fs_hz.is_finite() && self.fs_hz > 0.0) {
            return Err(DspError::Parameter(format!("fs_hz = {}", self.fs_hz)));
        }
        let got_s = self.duration_s();
        // tolerate float rounding in n / fs
        if got_s + 1e-9 < required_s {
            return Err(DspError::WindowTooShort { required_s, got_s });
        }
        let expected_ms = 1000.0 / self.fs_hz;
        for pair in self.samples.windows(2) {
            let dt = pair[1].t_ms as f64 - pair[0].t_ms as f64;
            if (dt - expected_ms).abs() > 1.0 {
                return Err(DspError::NonUniformWindow { expected_ms });
            }
        }
        Ok(())
    }

    pub(crate) fn red(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.red as f64).collect()
    }

    pub(crate) fn ir(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.ir as f64).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VitalKind {
    Spo2,
    RespRate,
    HeartRate,
}

impl VitalKind {
    /// Inclusive range a `Valid` reading must fall in.
    pub fn valid_range(self) -> (f64, f64) {
        match self {
            VitalKind::Spo2 => (70.0, 100.0),
            VitalKind::RespRate => (6.0, 30.0),
            VitalKind::HeartRate => (40.0, 180.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Quality {
    Valid,
    LowPerfusion,
    NoDominantPeak,
    NoBeats,
    OutOfRange,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VitalsReading {
    pub t_ms: u32,
    pub kind: VitalKind,
    /// Percent for SpO2, per minute otherwise. Zero when nothing could be measured.
    pub value: f64,
    pub quality: Quality,
}

impl VitalsReading {
    pub fn is_valid(&self) -> bool {
        self.quality == Quality::Valid
    }

    /// Builds a reading, downgrading it to `OutOfRange` when a would-be
    /// valid value falls outside the kind's range.
    pub(crate) fn checked(t_ms: u32, kind: VitalKind, value: f64) -> Self {
        let (lo, hi) = kind.valid_range();
        let quality = if value.is_finite() && value >= lo && value <= hi {
            Quality::Valid
        } else {
            Quality::OutOfRange
        };
        Self {
            t_ms,
            kind,
            value: if value.is_finite() { value } else { 0.0 },
            quality,
        }
    }

    pub(crate) fn flagged(t_ms: u32, kind: VitalKind, quality: Quality) -> Self {
        Self {
            t_ms,
            kind,
            value: 0.0,
            quality,
        }
    }
}
