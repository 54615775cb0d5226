use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::DspError;

/// Zero-phase band-limiting filter: forward transform, zero every bin outside
/// `[lo_hz, hi_hz]` (edges inclusive), inverse transform.
///
/// Sinusoids that sit on a bin pass or vanish exactly. Off-bin content leaks
/// across the band edges as with any rectangular window, so callers remove
/// trends first.
pub fn bandlimit(series: &[f64], fs_hz: f64, lo_hz: f64, hi_hz: f64) -> Result<Vec<f64>, DspError> {
    if !(fs_hz.is_finite() && lo_hz.is_finite() && hi_hz.is_finite()) {
        return Err(DspError::Parameter("non-finite band parameters".into()));
    }
    if !(fs_hz > 2.0 * hi_hz) {
        return Err(DspError::Parameter(format!(
            "fs_hz {fs_hz} must exceed twice hi_hz {hi_hz}"
        )));
    }
    if !(lo_hz >= 0.0 && lo_hz < hi_hz) {
        return Err(DspError::Parameter(format!(
            "band [{lo_hz}, {hi_hz}] must satisfy 0 <= lo < hi"
        )));
    }
    let n = series.len();
    if n == 0 {
        return Ok(Vec::new());
    }

    let m = n;
    let mut buf: Vec<Complex<f64>> = series.iter().map(|&v| Complex::new(v, 0.0)).collect();

    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(m).process(&mut buf);

    let bin_hz = fs_hz / m as f64;
    // small slack so a band edge that lands exactly on a bin keeps that bin
    let eps = 1e-9 * bin_hz;
    for (k, c) in buf.iter_mut().enumerate() {
        let kk = k.min(m - k);
        let f = kk as f64 * bin_hz;
        if f + eps < lo_hz || f - eps > hi_hz {
            *c = Complex::new(0.0, 0.0);
        }
    }

    planner.plan_fft_inverse(m).process(&mut buf);
    let scale = 1.0 / m as f64;
    Ok(buf.iter().map(|c| c.re * scale).collect())
}

/// Removes the least-squares straight line.
pub fn detrend_linear(series: &[f64]) -> Vec<f64> {
    let n = series.len();
    if n < 2 {
        return vec![0.0; n];
    }
    let nf = n as f64;
    let mean_x = (nf - 1.0) / 2.0;
    let mean_y = series.iter().sum::<f64>() / nf;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (i, &y) in series.iter().enumerate() {
        let dx = i as f64 - mean_x;
        sxy += dx * (y - mean_y);
        sxx += dx * dx;
    }
    let slope = sxy / sxx;
    series
        .iter()
        .enumerate()
        .map(|(i, &y)| y - mean_y - slope * (i as f64 - mean_x))
        .collect()
}

/// Linear-interpolated percentile, `p` in [0, 100]. Returns 0 for an empty slice.
pub fn percentile(series: &[f64], p: f64) -> f64 {
    if series.is_empty() {
        return 0.0;
    }
    let mut sorted = series.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let rank = (p.clamp(0.0, 100.0) / 100.0) * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}
