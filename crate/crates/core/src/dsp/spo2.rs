//! Ratio-of-ratios SpO2.

use serde::{Deserialize, Serialize};

use super::{bandlimit, detrend_linear, percentile, DspError, PpgWindow, Quality, VitalKind, VitalsReading, SPO2_WINDOW_S};

const BAND_LO_HZ: f64 = 0.5;
const BAND_HI_HZ: f64 = 5.0;
const MIN_PERFUSION: f64 = 0.001;

/// Empirical calibration `SpO2 = a - b * R`, clamped to `[clamp_lo, clamp_hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Spo2Calibration {
    pub a: f64,
    pub b: f64,
    pub clamp_lo: f64,
    pub clamp_hi: f64,
}

impl Default for Spo2Calibration {
    fn default() -> Self {
        Self {
            a: 110.0,
            b: 25.0,
            clamp_lo: 70.0,
            clamp_hi: 100.0,
        }
    }
}

impl Spo2Calibration {
    pub fn validate(&self) -> Result<(), DspError> {
        if !(self.b > 0.0) {
            return Err(DspError::Parameter("calibration slope b must be positive".into()));
        }
        if !(self.clamp_lo < self.clamp_hi) {
            return Err(DspError::Parameter("clamp_lo must be below clamp_hi".into()));
        }
        Ok(())
    }

    pub fn unclamped(&self, ratio: f64) -> f64 {
        self.a - self.b * ratio
    }

    pub fn apply(&self, ratio: f64) -> f64 {
        self.unclamped(ratio).clamp(self.clamp_lo, self.clamp_hi)
    }

    /// The R that maps to `spo2` before clamping.
    pub fn ratio_for(&self, spo2: f64) -> f64 {
        (self.a - spo2) / self.b
    }
}

/// AC and DC of one channel: DC is the mean, AC the 5th-95th percentile
/// spread of the detrended, band-limited channel.
fn ac_dc(channel: &[f64], fs_hz: f64) -> Result<(f64, f64), DspError> {
    let dc = channel.iter().sum::<f64>() / channel.len() as f64;
    let pulsatile = bandlimit(&detrend_linear(channel), fs_hz, BAND_LO_HZ, BAND_HI_HZ)?;
    let ac = percentile(&pulsatile, 95.0) - percentile(&pulsatile, 5.0);
    Ok((ac, dc))
}

/// Ratio of ratios for a window, or `None` when perfusion is too low to measure.
pub fn ratio_of_ratios(w: &PpgWindow<'_>) -> Result<Option<f64>, DspError> {
    let (ac_red, dc_red) = ac_dc(&w.red(), w.fs_hz)?;
    let (ac_ir, dc_ir) = ac_dc(&w.ir(), w.fs_hz)?;
    if !(dc_red > 0.0 && dc_ir > 0.0) {
        return Ok(None);
    }
    let pi_ir = ac_ir / dc_ir;
    if !(pi_ir >= MIN_PERFUSION) {
        return Ok(None);
    }
    Ok(Some((ac_red / dc_red) / pi_ir))
}

pub fn spo2_from_window(w: &PpgWindow<'_>, cal: &Spo2Calibration) -> Result<VitalsReading, DspError> {
    cal.validate()?;
    w.check(SPO2_WINDOW_S)?;
    let t = w.end_ms();
    Ok(match ratio_of_ratios(w)? {
        None => VitalsReading::flagged(t, VitalKind::Spo2, Quality::LowPerfusion),
        Some(r) => VitalsReading::checked(t, VitalKind::Spo2, cal.apply(r)),
    })
}
