//! Respiratory rate from the respiratory amplitude modulation of the IR channel.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::{bandlimit, percentile, DspError, PpgWindow, Quality, VitalKind, VitalsReading, RR_WINDOW_S};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RrConfig {
    pub lo_hz: f64,
    pub hi_hz: f64,
    /// Periodogram bin width after zero padding must not exceed this.
    pub max_bin_hz: f64,
    /// Peak power must reach this multiple of the in-band median power.
    pub min_peak_to_median: f64,
    /// In-band RMS relative to the IR DC level below which there is no
    /// respiratory signal to speak of.
    pub min_relative_rms: f64,
}

impl Default for RrConfig {
    fn default() -> Self {
        Self {
            lo_hz: 0.1,
            hi_hz: 0.5,
            max_bin_hz: 0.005,
            min_peak_to_median: 3.0,
            min_relative_rms: 1e-4,
        }
    }
}

pub fn rr_from_window(w: &PpgWindow<'_>) -> Result<VitalsReading, DspError> {
    rr_from_window_with(w, &RrConfig::default())
}

pub fn rr_from_window_with(w: &PpgWindow<'_>, cfg: &RrConfig) -> Result<VitalsReading, DspError> {
    w.check(RR_WINDOW_S)?;
    let t = w.end_ms();
    let ir = w.ir();
    let n = ir.len();
    let dc = ir.iter().sum::<f64>() / n as f64;
    // Hann taper: without it the pulse train leaks into the breathing band
    // whenever the window holds a non-integer number of beats
    let tapered: Vec<f64> = ir
        .iter()
        .enumerate()
        .map(|(i, v)| (v - dc) * 2.0 * (PI * i as f64 / (n - 1) as f64).sin().powi(2))
        .collect();
    let resp = bandlimit(&tapered, w.fs_hz, cfg.lo_hz, cfg.hi_hz)?;

    // the taper's mean square is 3/8 with the 2x gain above, 3/2
    let rms = (resp.iter().map(|v| v * v).sum::<f64>() / n as f64 / 1.5).sqrt();
    if !(dc > 0.0) || rms < cfg.min_relative_rms * dc {
        return Ok(VitalsReading::flagged(t, VitalKind::RespRate, Quality::NoDominantPeak));
    }

    let min_len = (w.fs_hz / cfg.max_bin_hz).ceil() as usize;
    let nfft = n.max(min_len).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = resp.iter().map(|&v| Complex::new(v, 0.0)).collect();
    buf.resize(nfft, Complex::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(nfft).process(&mut buf);

    let bin_hz = w.fs_hz / nfft as f64;
    let k_lo = (cfg.lo_hz / bin_hz).ceil() as usize;
    let k_hi = ((cfg.hi_hz / bin_hz).floor() as usize).min(nfft / 2);
    if k_lo > k_hi {
        return Ok(VitalsReading::flagged(t, VitalKind::RespRate, Quality::NoDominantPeak));
    }
    let power: Vec<f64> = buf[k_lo..=k_hi].iter().map(|c| c.norm_sqr() / n as f64).collect();
    let (peak_idx, peak) = power
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::MIN), |best, (i, p)| if p > best.1 { (i, p) } else { best });
    let median = percentile(&power, 50.0);
    if !(peak >= cfg.min_peak_to_median * median) {
        return Ok(VitalsReading::flagged(t, VitalKind::RespRate, Quality::NoDominantPeak));
    }
    let f = (k_lo + peak_idx) as f64 * bin_hz;
    Ok(VitalsReading::checked(t, VitalKind::RespRate, 60.0 * f))
}
