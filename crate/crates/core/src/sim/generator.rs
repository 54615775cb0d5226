//! Seeded synthetic sensor streams.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{EffortProfile, PhysioProfile, SimError};
use crate::dsp::{AccelSample, PpgSample};

pub const PPG_DT_MS: u32 = 10;
pub const ACCEL_DT_MS: u32 = 20;
const GRAVITY_MG: f64 = 1000.0;

/// Fraction of the beat spent on the systolic upstroke.
const SYSTOLE: f64 = 0.25;
/// Decay time constant as a fraction of the beat.
const DECAY: f64 = 0.25;

/// Unit pulse over one beat, `phase` in [0, 1): a half-sine rise to 1 at the
/// systolic peak, then an exponential decay shifted so the beat ends at 0.
pub fn pulse_shape(phase: f64) -> f64 {
    if phase < SYSTOLE {
        (0.5 * PI * phase / SYSTOLE).sin()
    } else {
        let end = (-(1.0 - SYSTOLE) / DECAY).exp();
        (((-(phase - SYSTOLE) / DECAY).exp()) - end) / (1.0 - end)
    }
}

fn gaussian(rng: &mut ChaCha8Rng, sd: f64) -> f64 {
    if sd > 0.0 {
        Normal::new(0.0, sd).map(|n| n.sample(rng)).unwrap_or(0.0)
    } else {
        0.0
    }
}

pub(crate) fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Streaming PPG synthesiser. Pulse and respiration phases accumulate so rate
/// changes mid-stream stay continuous.
#[derive(Debug, Clone)]
pub struct PpgSynth {
    rng: ChaCha8Rng,
    pulse_phase: f64,
    resp_phase: f64,
}

impl PpgSynth {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: rng_for(seed, 1),
            pulse_phase: 0.0,
            resp_phase: 0.0,
        }
    }

    /// Sample at `t_ms`, then advance one 10 ms step.
    pub fn next(&mut self, t_ms: u32, p: &PhysioProfile) -> PpgSample {
        let pulse = pulse_shape(self.pulse_phase);
        let envelope = 1.0 + p.resp_mod_depth * (2.0 * PI * self.resp_phase).sin();
        let ir = p.dc_ir * (1.0 + p.perfusion_ir * envelope * pulse) + gaussian(&mut self.rng, p.ppg_noise_sd);
        let red = p.dc_red * (1.0 + p.perfusion_red() * envelope * pulse) + gaussian(&mut self.rng, p.ppg_noise_sd);

        let dt = PPG_DT_MS as f64 / 1000.0;
        self.pulse_phase = (self.pulse_phase + p.hr_bpm / 60.0 * dt).fract();
        self.resp_phase = (self.resp_phase + p.resp_freq_hz * dt).fract();

        let quantize = |v: f64| v.round().clamp(0.0, u16::MAX as f64) as u16;
        PpgSample {
            t_ms,
            red: quantize(red),
            ir: quantize(ir),
        }
    }
}

/// Streaming accelerometer synthesiser with a simple lifting model: while
/// asked to lift it performs back-to-back sinusoidal reps on the vertical
/// axis, and a started rep always runs to the end of its period.
#[derive(Debug, Clone)]
pub struct AccelSynth {
    rng: ChaCha8Rng,
    rep: Option<ActiveRep>,
}

#[derive(Debug, Clone, Copy)]
struct ActiveRep {
    start_ms: u32,
    period_ms: u32,
    amplitude: f64,
}

impl AccelSynth {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: rng_for(seed, 2),
            rep: None,
        }
    }

    pub fn mid_rep(&self) -> bool {
        self.rep.is_some()
    }

    /// Sample at `t_ms`. Starts a rep here if none is running and `lift` is
    /// set; returns the completion time of a rep whose last sample this is.
    pub fn next(&mut self, t_ms: u32, e: &EffortProfile, lift: bool) -> (AccelSample, Option<u32>) {
        if self.rep.is_none() && lift && e.rep_amplitude_mg > 0.0 {
            self.rep = Some(ActiveRep {
                start_ms: t_ms,
                period_ms: (e.rep_period_s * 1000.0).round() as u32,
                amplitude: e.rep_amplitude_mg,
            });
        }
        let mut lift_mg = 0.0;
        let mut completed = None;
        if let Some(rep) = self.rep {
            let elapsed = t_ms - rep.start_ms;
            lift_mg = rep.amplitude * (2.0 * PI * elapsed as f64 / rep.period_ms as f64).sin();
            if elapsed + ACCEL_DT_MS >= rep.period_ms {
                completed = Some(rep.start_ms + rep.period_ms);
                self.rep = None;
            }
        }
        let sd = e.accel_noise_sd_mg;
        let clamp = |v: f64| v.round().clamp(-16000.0, 16000.0) as i16;
        let x = gaussian(&mut self.rng, sd);
        let y = gaussian(&mut self.rng, sd);
        let z = GRAVITY_MG + lift_mg + gaussian(&mut self.rng, sd);
        (
            AccelSample {
                t_ms,
                x: clamp(x),
                y: clamp(y),
                z: clamp(z),
            },
            completed,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccelTrace {
    pub samples: Vec<AccelSample>,
    /// Ground-truth completion time of every rep.
    pub rep_times_ms: Vec<u32>,
}

/// A 50 Hz accelerometer stream: `reps_intended` reps back to back from
/// t = 0 (continuous reps when unset), gravity and noise only afterwards.
pub fn gen_accel_trace(effort: &EffortProfile, duration_s: f64, seed: u64) -> Result<AccelTrace, SimError> {
    effort.validate()?;
    if !(duration_s >= effort.rep_period_s) {
        return Err(SimError::Parameter(format!(
            "duration {duration_s} s is shorter than one rep period"
        )));
    }
    let n = (duration_s * 1000.0 / ACCEL_DT_MS as f64).round() as u32;
    let cap = effort.reps_intended.unwrap_or(u32::MAX);
    let mut synth = AccelSynth::new(seed);
    let mut started = 0u32;
    let mut trace = AccelTrace {
        samples: Vec::with_capacity(n as usize),
        rep_times_ms: Vec::new(),
    };
    for i in 0..n {
        let t = i * ACCEL_DT_MS;
        let was_mid = synth.mid_rep();
        let want = started < cap;
        let (s, done) = synth.next(t, effort, want);
        if !was_mid && want && effort.rep_amplitude_mg > 0.0 {
            started += 1;
        }
        trace.samples.push(s);
        trace.rep_times_ms.extend(done);
    }
    Ok(trace)
}

/// A 100 Hz dual-channel PPG stream for a fixed profile.
pub fn gen_ppg_trace(physio: &PhysioProfile, duration_s: f64, seed: u64) -> Result<Vec<PpgSample>, SimError> {
    physio.validate()?;
    if !(duration_s > 0.0) {
        return Err(SimError::Parameter("duration must be positive".into()));
    }
    let n = (duration_s * 1000.0 / PPG_DT_MS as f64).round() as u32;
    let mut synth = PpgSynth::new(seed);
    Ok((0..n).map(|i| synth.next(i * PPG_DT_MS, physio)).collect())
}
