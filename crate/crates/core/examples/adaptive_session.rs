//! Drives the session controller by hand: a comfortable first set steps
//! the level up, then a desaturation aborts the session.

use pulmobell::dsp::{Quality, RepEvent, VitalKind, VitalsReading};
use pulmobell::session::{AirQualitySample, ControllerCommand, Regimen, SafetyConfig, SessionInput, SessionState};

fn vital(t_ms: u32, kind: VitalKind, value: f64) -> SessionInput {
    SessionInput::Vitals(VitalsReading { t_ms, kind, value, quality: Quality::Valid })
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut s = SessionState::new(Regimen { rest_s: 30, ..Regimen::default() }, SafetyConfig::default())?;
    let mut inputs = vec![
        SessionInput::Air(AirQualitySample { t_ms: 0, pm25: 9.0, pm10: 22.0 }),
        SessionInput::Command { t_ms: 0, command: ControllerCommand::Start },
        vital(1000, VitalKind::Spo2, 96.5),
        vital(1000, VitalKind::RespRate, 17.0),
    ];
    for i in 1..=10 {
        inputs.push(SessionInput::Rep(RepEvent { t_ms: i * 4000, duration_s: 4.0, peak_mg: 1350.0 }));
    }
    inputs.push(SessionInput::Tick(70_000));
    inputs.push(vital(75_000, VitalKind::Spo2, 84.0));

    for input in inputs {
        let out = s.step(input);
        for e in &out.events {
            println!("{:>6} ms  {:?} arg {}", e.t_ms, e.code, e.arg);
        }
        for c in &out.commands {
            println!("          command {c:?}");
        }
    }
    println!("final phase {:?}, level {}, reps {}", s.phase(), s.level().get(), s.total_reps());
    Ok(())
}
