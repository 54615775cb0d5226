//! Scenario files: initial conditions plus a timeline of scripted changes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AirProfile, EffortProfile, PhysioProfile, SimError};
use crate::dsp::{RepCounterConfig, Spo2Calibration};
use crate::protocol::CommandCode;
use crate::session::{Regimen, SafetyConfig};

pub const DEFAULT_MAX_DURATION_S: f64 = 3600.0;

/// A generator or air parameter that the timeline and steering can change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioField {
    HrBpm,
    Spo2Target,
    RespFreqHz,
    RespModDepth,
    PerfusionIr,
    PpgNoiseSd,
    RepPeriodS,
    RepAmplitudeMg,
    AccelNoiseSdMg,
    Pm25,
    Pm10,
}

impl ScenarioField {
    pub const ALL: [ScenarioField; 11] = [
        Self::HrBpm,
        Self::Spo2Target,
        Self::RespFreqHz,
        Self::RespModDepth,
        Self::PerfusionIr,
        Self::PpgNoiseSd,
        Self::RepPeriodS,
        Self::RepAmplitudeMg,
        Self::AccelNoiseSdMg,
        Self::Pm25,
        Self::Pm10,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::HrBpm => "hr_bpm",
            Self::Spo2Target => "spo2_target",
            Self::RespFreqHz => "resp_freq_hz",
            Self::RespModDepth => "resp_mod_depth",
            Self::PerfusionIr => "perfusion_ir",
            Self::PpgNoiseSd => "ppg_noise_sd",
            Self::RepPeriodS => "rep_period_s",
            Self::RepAmplitudeMg => "rep_amplitude_mg",
            Self::AccelNoiseSdMg => "accel_noise_sd_mg",
            Self::Pm25 => "pm25",
            Self::Pm10 => "pm10",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.name() == name)
    }

    /// Wire command code and fixed-point scale: `arg = round(value * scale)`.
    pub fn wire(self) -> (CommandCode, f64) {
        match self {
            Self::Spo2Target => (CommandCode::SteerSpo2Target, 10.0),
            Self::HrBpm => (CommandCode::SteerHrBpm, 10.0),
            Self::RespFreqHz => (CommandCode::SteerRespFreq, 1000.0),
            Self::RespModDepth => (CommandCode::SteerRespModDepth, 1000.0),
            Self::Pm25 => (CommandCode::SteerPm25, 10.0),
            Self::Pm10 => (CommandCode::SteerPm10, 10.0),
            Self::RepAmplitudeMg => (CommandCode::SteerRepAmplitude, 1.0),
            Self::RepPeriodS => (CommandCode::SteerRepPeriod, 1000.0),
            Self::AccelNoiseSdMg => (CommandCode::SteerAccelNoise, 1.0),
            Self::PpgNoiseSd => (CommandCode::SteerPpgNoise, 1.0),
            Self::PerfusionIr => (CommandCode::SteerPerfusion, 10000.0),
        }
    }

    pub fn from_command(code: CommandCode) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.wire().0 == code)
    }
}

/// One immediate parameter change. Timeline entries and live steering share
/// this shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SteeringCommand {
    pub field: ScenarioField,
    pub value: f64,
}

impl SteeringCommand {
    pub fn new(field: ScenarioField, value: f64) -> Self {
        Self { field, value }
    }

    pub fn to_wire(&self) -> Result<(CommandCode, u16), SimError> {
        let (code, scale) = self.field.wire();
        let arg = (self.value * scale).round();
        if !(0.0..=u16::MAX as f64).contains(&arg) {
            return Err(SimError::Steering(format!(
                "{} = {} cannot be sent on the wire",
                self.field.name(),
                self.value
            )));
        }
        Ok((code, arg as u16))
    }

    pub fn from_wire(code: CommandCode, arg: u16) -> Option<Self> {
        let field = ScenarioField::from_command(code)?;
        Some(Self::new(field, arg as f64 / field.wire().1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimelineEntry {
    pub t_s: f64,
    pub field: ScenarioField,
    pub value: f64,
}

/// A button press by the simulated user.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserAction {
    pub t_s: f64,
    pub command: UserCommand,
    #[serde(default)]
    pub arg: u16,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UserCommand {
    Pause,
    Resume,
    Stop,
    SetIntensity,
}

/// Everything a device run needs, loaded from one JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioScript {
    pub seed: u64,
    #[serde(default)]
    pub regimen: Regimen,
    #[serde(default)]
    pub physio: PhysioProfile,
    #[serde(default)]
    pub effort: EffortProfile,
    #[serde(default)]
    pub air: AirProfile,
    #[serde(default)]
    pub timeline: Vec<TimelineEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub user_actions: Vec<UserAction>,
    /// Simulated time after which the device gives up and stops.
    #[serde(default = "default_max_duration")]
    pub max_duration_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rep_counter: Option<RepCounterConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spo2_calibration: Option<Spo2Calibration>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub safety: Option<SafetyConfig>,
}

fn default_max_duration() -> f64 {
    DEFAULT_MAX_DURATION_S
}

impl ScenarioScript {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            regimen: Regimen::default(),
            physio: PhysioProfile::default(),
            effort: EffortProfile::default(),
            air: AirProfile::default(),
            timeline: Vec::new(),
            user_actions: Vec::new(),
            max_duration_s: DEFAULT_MAX_DURATION_S,
            rep_counter: None,
            spo2_calibration: None,
            safety: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let script: Self = serde_json::from_str(text).map_err(|e| SimError::Scenario {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        script.validate()?;
        Ok(script)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::Parameter(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.regimen.validate().map_err(|e| SimError::Parameter(e.to_string()))?;
        self.physio.validate()?;
        self.effort.validate()?;
        self.air.validate()?;
        if !(self.max_duration_s > 0.0 && self.max_duration_s <= 86_400.0) {
            return Err(SimError::Parameter(format!(
                "max_duration_s = {} outside (0, 86400]",
                self.max_duration_s
            )));
        }
        let mut prev = 0.0;
        for (i, e) in self.timeline.iter().enumerate() {
            if !(e.t_s >= prev) || !e.t_s.is_finite() {
                return Err(SimError::Parameter(format!(
                    "timeline[{i}].t_s = {} is negative or earlier than the entry before it",
                    e.t_s
                )));
            }
            prev = e.t_s;
        }
        // every change must leave valid profiles behind
        let mut state = SimParams::from(self);
        for (i, e) in self.timeline.iter().enumerate() {
            state = state
                .with(&SteeringCommand::new(e.field, e.value))
                .map_err(|err| SimError::Parameter(format!("timeline[{i}]: {err}")))?;
        }
        let mut prev = 0.0;
        for (i, a) in self.user_actions.iter().enumerate() {
            if !(a.t_s >= prev) || !a.t_s.is_finite() {
                return Err(SimError::Parameter(format!("user_actions[{i}] out of order")));
            }
            prev = a.t_s;
        }
        if let Some(c) = &self.rep_counter {
            c.validate().map_err(|e| SimError::Parameter(e.to_string()))?;
        }
        if let Some(c) = &self.spo2_calibration {
            c.validate().map_err(|e| SimError::Parameter(e.to_string()))?;
        }
        if let Some(s) = &self.safety {
            s.validate().map_err(|e| SimError::Parameter(e.to_string()))?;
        }
        Ok(())
    }
}

/// The steerable part of a running simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub physio: PhysioProfile,
    pub effort: EffortProfile,
    pub air: AirProfile,
}

impl From<&ScenarioScript> for SimParams {
    fn from(s: &ScenarioScript) -> Self {
        Self {
            physio: s.physio,
            effort: s.effort,
            air: s.air,
        }
    }
}

impl SimParams {
    /// A copy with one field changed, or an error if the result is invalid.
    pub fn with(&self, cmd: &SteeringCommand) -> Result<Self, SimError> {
        let mut next = *self;
        let v = cmd.value;
        match cmd.field {
            ScenarioField::HrBpm => next.physio.hr_bpm = v,
            ScenarioField::Spo2Target => next.physio.spo2_target = v,
            ScenarioField::RespFreqHz => next.physio.resp_freq_hz = v,
            ScenarioField::RespModDepth => next.physio.resp_mod_depth = v,
            ScenarioField::PerfusionIr => next.physio.perfusion_ir = v,
            ScenarioField::PpgNoiseSd => next.physio.ppg_noise_sd = v,
            ScenarioField::RepPeriodS => next.effort.rep_period_s = v,
            ScenarioField::RepAmplitudeMg => next.effort.rep_amplitude_mg = v,
            ScenarioField::AccelNoiseSdMg => next.effort.accel_noise_sd_mg = v,
            ScenarioField::Pm25 => next.air.pm25 = v,
            ScenarioField::Pm10 => next.air.pm10 = v,
        }
        let check = next
            .physio
            .validate()
            .and_then(|_| next.effort.validate())
            .and_then(|_| next.air.validate());
        match check {
            Ok(()) => Ok(next),
            Err(SimError::Parameter(m)) => Err(SimError::Steering(m)),
            Err(e) => Err(e),
        }
    }

    pub fn get(&self, field: ScenarioField) -> f64 {
        match field {
            ScenarioField::HrBpm => self.physio.hr_bpm,
            ScenarioField::Spo2Target => self.physio.spo2_target,
            ScenarioField::RespFreqHz => self.physio.resp_freq_hz,
            ScenarioField::RespModDepth => self.physio.resp_mod_depth,
            ScenarioField::PerfusionIr => self.physio.perfusion_ir,
            ScenarioField::PpgNoiseSd => self.physio.ppg_noise_sd,
            ScenarioField::RepPeriodS => self.effort.rep_period_s,
            ScenarioField::RepAmplitudeMg => self.effort.rep_amplitude_mg,
            ScenarioField::AccelNoiseSdMg => self.effort.accel_noise_sd_mg,
            ScenarioField::Pm25 => self.air.pm25,
            ScenarioField::Pm10 => self.air.pm10,
        }
    }
}
