//! Counts reps in synthetic accelerometer traces at rising noise levels.

use pulmobell::dsp::{RepCounter, RepCounterConfig};
use pulmobell::sim::{gen_accel_trace, EffortProfile};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for noise in [0.0, 40.0, 80.0, 160.0] {
        let effort = EffortProfile {
            accel_noise_sd_mg: noise,
            reps_intended: Some(10),
            ..EffortProfile::default()
        };
        let trace = gen_accel_trace(&effort, 44.0, 7)?;
        let mut counter = RepCounter::new(RepCounterConfig::default())?;
        let mut peaks = Vec::new();
        for s in &trace.samples {
            if let Some(rep) = counter.step(*s)? {
                peaks.push(rep.peak_mg);
            }
        }
        let mean_peak = peaks.iter().sum::<f64>() / peaks.len().max(1) as f64;
        println!(
            "noise {noise:>5} mg: counted {:>2} of {}, mean peak {mean_peak:.0} mg",
            counter.count(),
            trace.rep_times_ms.len()
        );
    }
    Ok(())
}
