//! Vitals-driven intensity rules.

use serde::{Deserialize, Serialize};

use super::IntensityLevel;

/// Safety and adaptation thresholds. The defaults are the tested contract.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SafetyConfig {
    pub abort_spo2: f64,
    pub pause_spo2: f64,
    pub pause_sustain_s: f64,
    pub rr_high: f64,
    pub rr_sustain_s: f64,
    pub step_up_min_spo2: f64,
    pub step_up_max_rr: f64,
    /// Consecutive non-valid SpO2 readings during activity that raise a
    /// sensor-quality warning.
    pub sensor_quality_run: u32,
}

impl Default for SafetyConfig {
    fn default() -> Self {
        Self {
            abort_spo2: 85.0,
            pause_spo2: 90.0,
            pause_sustain_s: 10.0,
            rr_high: 30.0,
            rr_sustain_s: 15.0,
            step_up_min_spo2: 94.0,
            step_up_max_rr: 25.0,
            sensor_quality_run: 10,
        }
    }
}

impl SafetyConfig {
    pub fn validate(&self) -> Result<(), super::SessionError> {
        let finite = [
            self.abort_spo2,
            self.pause_spo2,
            self.pause_sustain_s,
            self.rr_high,
            self.rr_sustain_s,
            self.step_up_min_spo2,
            self.step_up_max_rr,
        ]
        .iter()
        .all(|v| v.is_finite() && *v >= 0.0);
        if !finite || self.abort_spo2 > self.pause_spo2 {
            return Err(super::SessionError::Parameter(
                "safety thresholds must be finite, non-negative, and abort <= pause".into(),
            ));
        }
        Ok(())
    }
}

/// Vitals aggregated over the current set.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SetVitals {
    pub min_spo2: Option<f64>,
    pub max_rr: Option<f64>,
    pub spo2_low_sustained_s: f64,
    pub rr_high_sustained_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AdjustReason {
    Abort,
    Pause,
    RrHigh,
    StepUp,
    Hold,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Adjustment {
    pub level: IntensityLevel,
    pub reason: AdjustReason,
}

/// Applies the rules in priority order: abort, pause, step down on high RR,
/// step up after a comfortable set, otherwise hold.
///
/// Abort and pause leave the level unchanged; the caller acts on them. At the
/// ceiling a met step-up condition reports `Hold`.
pub fn adjust_intensity(
    level: IntensityLevel,
    ceiling: IntensityLevel,
    set: &SetVitals,
    cfg: &SafetyConfig,
) -> Adjustment {
    let hold = |reason| Adjustment { level, reason };
    if set.min_spo2.is_some_and(|s| s < cfg.abort_spo2) {
        return hold(AdjustReason::Abort);
    }
    if set.spo2_low_sustained_s >= cfg.pause_sustain_s {
        return hold(AdjustReason::Pause);
    }
    if set.rr_high_sustained_s >= cfg.rr_sustain_s {
        return Adjustment {
            level: level.step_down(),
            reason: AdjustReason::RrHigh,
        };
    }
    let comfortable = set.min_spo2.is_some_and(|s| s >= cfg.step_up_min_spo2)
        && set.max_rr.is_some_and(|r| r <= cfg.step_up_max_rr);
    if comfortable {
        let up = level.step_up(ceiling);
        if up != level {
            return Adjustment {
                level: up,
                reason: AdjustReason::StepUp,
            };
        }
    }
    hold(AdjustReason::Hold)
}
