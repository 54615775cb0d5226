//! Heart rate from beat-to-beat intervals of the band-limited IR channel.

use serde::{Deserialize, Serialize};

use super::{bandlimit, percentile, DspError, PpgWindow, Quality, VitalKind, VitalsReading, HR_WINDOW_S};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HrConfig {
    pub lo_hz: f64,
    pub hi_hz: f64,
    pub min_separation_s: f64,
    /// A beat's height above the window median must reach this fraction of
    /// the 95th-percentile height.
    pub min_rel_height: f64,
    pub min_beats: usize,
}

impl Default for HrConfig {
    fn default() -> Self {
        Self {
            lo_hz: 0.7,
            hi_hz: 3.5,
            min_separation_s: 0.3,
            min_rel_height: 0.5,
            min_beats: 3,
        }
    }
}

pub fn hr_from_window(w: &PpgWindow<'_>) -> Result<VitalsReading, DspError> {
    hr_from_window_with(w, &HrConfig::default())
}

/// Beat times in seconds from the window start, sub-sample refined.
pub fn beat_times(w: &PpgWindow<'_>, cfg: &HrConfig) -> Result<Vec<f64>, DspError> {
    let ir = w.ir();
    let dc = ir.iter().sum::<f64>() / ir.len().max(1) as f64;
    let y = bandlimit(&ir, w.fs_hz, cfg.lo_hz, cfg.hi_hz)?;
    if y.len() < 3 {
        return Ok(Vec::new());
    }
    let base = percentile(&y, 50.0);
    let top = percentile(&y, 95.0) - base;
    // float residue of a constant input is not a pulse
    if !(top > 1e-9 * dc.abs().max(1.0)) {
        return Ok(Vec::new());
    }
    let min_height = base + cfg.min_rel_height * top;

    let mut candidates: Vec<usize> = (1..y.len() - 1)
        .filter(|&i| y[i] > y[i - 1] && y[i] >= y[i + 1] && y[i] >= min_height)
        .collect();
    candidates.sort_by(|&a, &b| y[b].total_cmp(&y[a]).then(a.cmp(&b)));

    let min_sep = (cfg.min_separation_s * w.fs_hz).round() as usize;
    let mut accepted: Vec<usize> = Vec::new();
    for i in candidates {
        if accepted.iter().all(|&j| i.abs_diff(j) >= min_sep) {
            accepted.push(i);
        }
    }
    accepted.sort_unstable();

    Ok(accepted
        .into_iter()
        .map(|i| {
            let (a, b, c) = (y[i - 1], y[i], y[i + 1]);
            let denom = a - 2.0 * b + c;
            let offset = if denom.abs() > f64::EPSILON { 0.5 * (a - c) / denom } else { 0.0 };
            (i as f64 + offset.clamp(-0.5, 0.5)) / w.fs_hz
        })
        .collect())
}

pub fn hr_from_window_with(w: &PpgWindow<'_>, cfg: &HrConfig) -> Result<VitalsReading, DspError> {
    w.check(HR_WINDOW_S)?;
    let t = w.end_ms();
    let beats = beat_times(w, cfg)?;
    if beats.len() < cfg.min_beats.max(2) {
        return Ok(VitalsReading::flagged(t, VitalKind::HeartRate, Quality::NoBeats));
    }
    let intervals: Vec<f64> = beats.windows(2).map(|p| p[1] - p[0]).collect();
    let median = percentile(&intervals, 50.0);
    Ok(VitalsReading::checked(t, VitalKind::HeartRate, 60.0 / median))
}
