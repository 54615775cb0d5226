use serde::{Deserialize, Serialize};

use super::SimError;
use crate::dsp::Spo2Calibration;

const ADC_MAX: f64 = 65535.0;
const ACCEL_RANGE_MG: f64 = 16000.0;

/// Generator parameters for the PPG channels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysioProfile {
    pub hr_bpm: f64,
    pub spo2_target: f64,
    pub resp_freq_hz: f64,
    pub resp_mod_depth: f64,
    pub perfusion_ir: f64,
    /// Gaussian noise standard deviation in ADC counts.
    pub ppg_noise_sd: f64,
    pub dc_red: f64,
    pub dc_ir: f64,
}

impl Default for PhysioProfile {
    fn default() -> Self {
        Self {
            hr_bpm: 75.0,
            spo2_target: 97.0,
            resp_freq_hz: 0.25,
            resp_mod_depth: 0.2,
            perfusion_ir: 0.02,
            ppg_noise_sd: 10.0,
            dc_red: 30000.0,
            dc_ir: 40000.0,
        }
    }
}

fn check_range(name: &str, v: f64, lo: f64, hi: f64) -> Result<(), SimError> {
    if v.is_finite() && v >= lo && v <= hi {
        Ok(())
    } else {
        Err(SimError::Parameter(format!("{name} = {v} outside [{lo}, {hi}]")))
    }
}

impl PhysioProfile {
    /// Red perfusion from the inverted calibration: `R * perfusion_ir`.
    pub fn perfusion_red(&self) -> f64 {
        Spo2Calibration::default().ratio_for(self.spo2_target) * self.perfusion_ir
    }

    pub fn validate(&self) -> Result<(), SimError> {
        check_range("hr_bpm", self.hr_bpm, 40.0, 180.0)?;
        check_range("spo2_target", self.spo2_target, 70.0, 100.0)?;
        check_range("resp_freq_hz", self.resp_freq_hz, 0.05, 0.6)?;
        check_range("resp_mod_depth", self.resp_mod_depth, 0.0, 0.5)?;
        check_range("perfusion_ir", self.perfusion_ir, 0.0, 0.2)?;
        check_range("ppg_noise_sd", self.ppg_noise_sd, 0.0, 2000.0)?;
        check_range("dc_red", self.dc_red, 1.0, ADC_MAX)?;
        check_range("dc_ir", self.dc_ir, 1.0, ADC_MAX)?;
        let margin = 4.0 * self.ppg_noise_sd;
        let swing = 1.0 + self.resp_mod_depth;
        for (name, dc, perf) in [
            ("red", self.dc_red, self.perfusion_red()),
            ("ir", self.dc_ir, self.perfusion_ir),
        ] {
            let top = dc * (1.0 + perf * swing) + margin;
            if top > ADC_MAX || dc - margin < 0.0 {
                return Err(SimError::Parameter(format!(
                    "{name} channel swings outside the ADC range (peak {top:.0} counts)"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EffortProfile {
    pub rep_period_s: f64,
    pub rep_amplitude_mg: f64,
    pub accel_noise_sd_mg: f64,
    /// Reps the user performs per set before stopping. `None` follows the
    /// prescription.
    pub reps_intended: Option<u32>,
}

impl Default for EffortProfile {
    fn default() -> Self {
        Self {
            rep_period_s: 4.0,
            rep_amplitude_mg: 400.0,
            accel_noise_sd_mg: 20.0,
            reps_intended: None,
        }
    }
}

impl EffortProfile {
    pub fn validate(&self) -> Result<(), SimError> {
        check_range("rep_period_s", self.rep_period_s, 1.0, 10.0)?;
        check_range("rep_amplitude_mg", self.rep_amplitude_mg, 0.0, 10000.0)?;
        check_range("accel_noise_sd_mg", self.accel_noise_sd_mg, 0.0, 2000.0)?;
        if 1000.0 + self.rep_amplitude_mg + 4.0 * self.accel_noise_sd_mg > ACCEL_RANGE_MG {
            return Err(SimError::Parameter("effort exceeds the ±16 g sensor range".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AirProfile {
    pub pm25: f64,
    pub pm10: f64,
}

impl Default for AirProfile {
    fn default() -> Self {
        Self { pm25: 8.0, pm10: 20.0 }
    }
}

impl AirProfile {
    pub fn validate(&self) -> Result<(), SimError> {
        check_range("pm25", self.pm25, 0.0, 6553.5)?;
        check_range("pm10", self.pm10, 0.0, 6553.5)?;
        Ok(())
    }
}
