//! Generates PPG at known physiology and estimates SpO2, RR and HR back.

use pulmobell::dsp::{hr_from_window, rr_from_window, spo2_from_window, PpgWindow, Spo2Calibration};
use pulmobell::sim::{gen_ppg_trace, PhysioProfile};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cal = Spo2Calibration::default();
    println!("{:>6} {:>6} {:>6} | {:>6} {:>6} {:>6}", "spo2", "rr", "hr", "est", "est", "est");
    for (spo2, resp_hz, hr) in [(97.0, 0.25, 75.0), (90.0, 0.15, 60.0), (85.0, 0.40, 120.0)] {
        let physio = PhysioProfile {
            spo2_target: spo2,
            resp_freq_hz: resp_hz,
            hr_bpm: hr,
            ..PhysioProfile::default()
        };
        let samples = gen_ppg_trace(&physio, 30.0, 1)?;
        let all = PpgWindow::new(&samples, 100.0);
        // SpO2 and HR use the last 4 s, RR the full 30 s
        let short = PpgWindow::new(&samples[samples.len() - 400..], 100.0);
        let s = spo2_from_window(&short, &cal)?;
        let r = rr_from_window(&all)?;
        let h = hr_from_window(&short)?;
        println!(
            "{spo2:>6.1} {:>6.1} {hr:>6.1} | {:>6.1} {:>6.1} {:>6.1}  {:?}/{:?}/{:?}",
            resp_hz * 60.0,
            s.value,
            r.value,
            h.value,
            s.quality,
            r.quality,
            h.quality
        );
    }
    Ok(())
}
