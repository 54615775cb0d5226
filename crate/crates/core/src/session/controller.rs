//! The session state machine.
//!
//! ```text
//! Idle --Start--> AirCheck --Good/Moderate--> ActiveSet(1) --reps done--> Rest(1) --rest over--> ActiveSet(2) ...
//!                    |                             |                                                   |
//!                    +--Poor--> Idle               +--Pause/desaturation--> Paused(prev) --Resume--> prev
//!                                                  +--SpO2 < abort / Stop--> Aborted       last set done --> Completed
//! ```
//!
//! `step` is deterministic in `(state, input)`; replaying a recorded input
//! sequence reproduces the same outputs.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::adjust::{adjust_intensity, AdjustReason, SafetyConfig, SetVitals};
use super::air::{classify_air, AirBand, AirQualitySample};
use super::regimen::{IntensityLevel, Regimen};
use super::SessionError;
use crate::dsp::{RepEvent, VitalKind, VitalsReading};
use crate::protocol::{EventCode, WarningCode};

const VITALS_HISTORY: usize = 256;

/// `arg` of Paused/Aborted events raised by the user rather than a rule.
pub const USER_ARG: u16 = 0xFFFF;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ControllerCommand {
    Start,
    Pause,
    Resume,
    Stop,
    SetIntensity(u8),
    Notify(WarningCode),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SessionInput {
    Rep(RepEvent),
    Vitals(VitalsReading),
    Air(AirQualitySample),
    Command { t_ms: u32, command: ControllerCommand },
    Tick(u32),
}

impl SessionInput {
    pub fn t_ms(&self) -> u32 {
        match self {
            SessionInput::Rep(r) => r.t_ms,
            SessionInput::Vitals(v) => v.t_ms,
            SessionInput::Air(a) => a.t_ms,
            SessionInput::Command { t_ms, .. } => *t_ms,
            SessionInput::Tick(t) => *t,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PausedFrom {
    ActiveSet(u32),
    Rest(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Idle,
    AirCheck,
    ActiveSet(u32),
    Rest(u32),
    Paused(PausedFrom),
    Completed,
    Aborted,
}

impl Phase {
    pub fn is_terminal(self) -> bool {
        matches!(self, Phase::Completed | Phase::Aborted)
    }

    /// A set, a rest or a pause: the session is under way.
    pub fn is_active(self) -> bool {
        matches!(self, Phase::ActiveSet(_) | Phase::Rest(_) | Phase::Paused(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PauseReason {
    User,
    Desaturation,
}

/// Why the level moved; the high byte of a `LevelChange` event's arg.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[repr(u8)]
pub enum LevelReason {
    StepUp = 0,
    RrHigh = 1,
    User = 2,
}

impl LevelReason {
    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(LevelReason::StepUp),
            1 => Some(LevelReason::RrHigh),
            2 => Some(LevelReason::User),
            _ => None,
        }
    }
}

pub fn level_change_arg(level: IntensityLevel, reason: LevelReason) -> u16 {
    level.get() as u16 | (reason as u16) << 8
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub t_ms: u32,
    pub code: EventCode,
    pub arg: u16,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Diagnostic {
    /// Input arrived in a phase that does not accept it.
    IgnoredInput { t_ms: u32, reason: String },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StepOutput {
    pub events: Vec<SessionEvent>,
    pub commands: Vec<ControllerCommand>,
    pub diagnostics: Vec<Diagnostic>,
}

impl StepOutput {
    /// True when the input was acted upon rather than ignored.
    pub fn accepted(&self) -> bool {
        self.diagnostics.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
struct SetTracker {
    min_spo2: Option<f64>,
    max_rr: Option<f64>,
    spo2_low_since: Option<u32>,
    rr_high_since: Option<u32>,
    level_changed: bool,
    rr_warned: bool,
}

impl SetTracker {
    fn vitals(&self, now: u32) -> SetVitals {
        let since = |s: Option<u32>| s.map_or(0.0, |s| now.saturating_sub(s) as f64 / 1000.0);
        SetVitals {
            min_spo2: self.min_spo2,
            max_rr: self.max_rr,
            spo2_low_sustained_s: since(self.spo2_low_since),
            rr_high_sustained_s: since(self.rr_high_since),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    regimen: Regimen,
    safety: SafetyConfig,
    phase: Phase,
    level: IntensityLevel,
    reps_in_set: u32,
    total_reps: u32,
    sets_completed: u32,
    vitals_history: VecDeque<VitalsReading>,
    air_band: Option<AirBand>,
    pause_reason: Option<PauseReason>,
    set: SetTracker,
    rest_until: Option<u32>,
    rest_remaining_ms: Option<u32>,
    invalid_spo2_run: u32,
    sensor_warned: bool,
    now: u32,
}

/// Collects outputs while a step runs.
struct Out<'a> {
    out: &'a mut StepOutput,
    t: u32,
}

impl Out<'_> {
    fn event(&mut self, code: EventCode, arg: u16) {
        self.out.events.push(SessionEvent { t_ms: self.t, code, arg });
    }
    fn warn(&mut self, w: WarningCode) {
        self.event(EventCode::Warning, w.code() as u16);
        self.out.commands.push(ControllerCommand::Notify(w));
    }
    fn ignore(&mut self, reason: impl Into<String>) {
        self.out.diagnostics.push(Diagnostic::IgnoredInput {
            t_ms: self.t,
            reason: reason.into(),
        });
    }
}

impl SessionState {
    pub fn new(regimen: Regimen, safety: SafetyConfig) -> Result<Self, SessionError> {
        regimen.validate()?;
        Ok(Self {
            level: regimen.start(),
            regimen,
            safety,
            phase: Phase::Idle,
            reps_in_set: 0,
            total_reps: 0,
            sets_completed: 0,
            vitals_history: VecDeque::with_capacity(VITALS_HISTORY),
            air_band: None,
            pause_reason: None,
            set: SetTracker::default(),
            rest_until: None,
            rest_remaining_ms: None,
            invalid_spo2_run: 0,
            sensor_warned: false,
            now: 0,
        })
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }
    pub fn level(&self) -> IntensityLevel {
        self.level
    }
    pub fn regimen(&self) -> &Regimen {
        &self.regimen
    }
    pub fn reps_in_set(&self) -> u32 {
        self.reps_in_set
    }
    pub fn reps_target(&self) -> u32 {
        self.level.reps_per_set()
    }
    pub fn total_reps(&self) -> u32 {
        self.total_reps
    }
    pub fn sets_completed(&self) -> u32 {
        self.sets_completed
    }
    pub fn air_band(&self) -> Option<AirBand> {
        self.air_band
    }
    pub fn pause_reason(&self) -> Option<PauseReason> {
        self.pause_reason
    }
    pub fn vitals_history(&self) -> impl Iterator<Item = &VitalsReading> {
        self.vitals_history.iter()
    }
    pub fn is_terminal(&self) -> bool {
        self.phase.is_terminal()
    }

    pub fn step(&mut self, input: SessionInput) -> StepOutput {
        let mut output = StepOutput::default();
        self.now = self.now.max(input.t_ms());
        let mut out = Out {
            out: &mut output,
            t: self.now,
        };
        if self.phase.is_terminal() {
            out.ignore(format!("{:?} after session end", input_kind(&input)));
            return output;
        }
        match input {
            SessionInput::Rep(_) => self.on_rep(&mut out),
            SessionInput::Vitals(v) => self.on_vitals(v, &mut out),
            SessionInput::Air(a) => self.on_air(a, &mut out),
            SessionInput::Command { command, .. } => self.on_command(command, &mut out),
            SessionInput::Tick(_) => self.on_tick(&mut out),
        }
        output
    }

    fn on_rep(&mut self, out: &mut Out<'_>) {
        let Phase::ActiveSet(_) = self.phase else {
            return;
        };
        self.reps_in_set += 1;
        self.total_reps += 1;
        out.event(EventCode::Rep, self.reps_in_set.min(u16::MAX as u32) as u16);
        if self.reps_in_set >= self.reps_target() {
            self.end_set(out);
        }
    }

    fn on_vitals(&mut self, v: VitalsReading, out: &mut Out<'_>) {
        if self.vitals_history.len() == VITALS_HISTORY {
            self.vitals_history.pop_front();
        }
        self.vitals_history.push_back(v);
        if !self.phase.is_active() {
            return;
        }
        let t = out.t;
        let cfg = self.safety;
        match (v.kind, v.is_valid()) {
            (VitalKind::Spo2, true) => {
                self.invalid_spo2_run = 0;
                self.sensor_warned = false;
                self.set.min_spo2 = Some(self.set.min_spo2.map_or(v.value, |m| m.min(v.value)));
                if v.value < cfg.pause_spo2 {
                    self.set.spo2_low_since.get_or_insert(t);
                } else {
                    self.set.spo2_low_since = None;
                }
                if v.value < cfg.abort_spo2 {
                    self.abort(WarningCode::Desaturation, out);
                    return;
                }
            }
            (VitalKind::Spo2, false) => {
                if matches!(self.phase, Phase::ActiveSet(_)) {
                    self.invalid_spo2_run += 1;
                    if self.invalid_spo2_run >= cfg.sensor_quality_run && !self.sensor_warned {
                        self.sensor_warned = true;
                        out.warn(WarningCode::SensorQuality);
                    }
                }
            }
            (VitalKind::RespRate, true) => {
                self.set.max_rr = Some(self.set.max_rr.map_or(v.value, |m| m.max(v.value)));
                if v.value > cfg.rr_high {
                    self.set.rr_high_since.get_or_insert(t);
                } else {
                    self.set.rr_high_since = None;
                }
            }
            _ => {}
        }

        if let Phase::Paused(_) = self.phase {
            return;
        }
        let decision = adjust_intensity(self.level, self.regimen.ceiling(), &self.set.vitals(t), &cfg);
        match decision.reason {
            AdjustReason::Abort => self.abort(WarningCode::Desaturation, out),
            AdjustReason::Pause => {
                out.warn(WarningCode::Desaturation);
                self.pause(PauseReason::Desaturation, out);
            }
            AdjustReason::RrHigh if matches!(self.phase, Phase::ActiveSet(_)) => {
                if !self.set.rr_warned {
                    self.set.rr_warned = true;
                    out.warn(WarningCode::RrHigh);
                }
                if !self.set.level_changed && decision.level != self.level {
                    self.change_level(decision.level, LevelReason::RrHigh, out);
                    if self.reps_in_set >= self.reps_target() {
                        self.end_set(out);
                    }
                }
            }
            // step-ups are decided on whole sets only
            _ => {}
        }
    }

    fn on_air(&mut self, a: AirQualitySample, out: &mut Out<'_>) {
        let band = match classify_air(a.pm25, a.pm10) {
            Ok(b) => b,
            Err(e) => {
                out.ignore(e.to_string());
                return;
            }
        };
        let previous = self.air_band.replace(band);
        match self.phase {
            Phase::AirCheck => self.resolve_air_check(out),
            p if p.is_active() && band == AirBand::Poor && previous != Some(AirBand::Poor) => {
                out.warn(WarningCode::AirPoor);
            }
            _ => {}
        }
    }

    fn on_command(&mut self, command: ControllerCommand, out: &mut Out<'_>) {
        match (command, self.phase) {
            (ControllerCommand::Start, Phase::Idle) => {
                self.phase = Phase::AirCheck;
                self.resolve_air_check(out);
            }
            (ControllerCommand::Pause, Phase::ActiveSet(_) | Phase::Rest(_)) => {
                self.pause(PauseReason::User, out);
            }
            (ControllerCommand::Resume, Phase::Paused(from)) => {
                self.phase = match from {
                    PausedFrom::ActiveSet(n) => Phase::ActiveSet(n),
                    PausedFrom::Rest(n) => {
                        let remaining = self.rest_remaining_ms.take().unwrap_or(0);
                        self.rest_until = Some(out.t.saturating_add(remaining));
                        Phase::Rest(n)
                    }
                };
                self.pause_reason = None;
                self.set.spo2_low_since = None;
                self.set.rr_high_since = None;
                out.event(EventCode::Resumed, 0);
                // the target may have dropped below the count while paused
                if matches!(self.phase, Phase::ActiveSet(_)) && self.reps_in_set >= self.reps_target() {
                    self.end_set(out);
                }
            }
            (ControllerCommand::Stop, _) => {
                self.phase = Phase::Aborted;
                out.event(EventCode::Aborted, USER_ARG);
            }
            (ControllerCommand::SetIntensity(l), _) => match IntensityLevel::new(l) {
                Ok(level) => {
                    if level != self.level {
                        self.change_level(level, LevelReason::User, out);
                    }
                    if matches!(self.phase, Phase::ActiveSet(_)) && self.reps_in_set >= self.reps_target() {
                        self.end_set(out);
                    }
                }
                Err(e) => out.ignore(e.to_string()),
            },
            (cmd, phase) => out.ignore(format!("{cmd:?} not accepted in {phase:?}")),
        }
    }

    fn on_tick(&mut self, out: &mut Out<'_>) {
        if let (Phase::Rest(n), Some(until)) = (self.phase, self.rest_until) {
            if out.t >= until {
                self.start_set(n + 1, out);
            }
        }
    }

    fn resolve_air_check(&mut self, out: &mut Out<'_>) {
        match self.air_band {
            None => {}
            Some(AirBand::Poor) => {
                self.phase = Phase::Idle;
                out.warn(WarningCode::AirPoor);
            }
            Some(band) => {
                if band == AirBand::Moderate {
                    out.warn(WarningCode::AirModerate);
                }
                self.start_set(1, out);
            }
        }
    }

    fn start_set(&mut self, n: u32, out: &mut Out<'_>) {
        self.phase = Phase::ActiveSet(n);
        self.reps_in_set = 0;
        self.rest_until = None;
        self.set = SetTracker::default();
        self.invalid_spo2_run = 0;
        self.sensor_warned = false;
        out.event(EventCode::SetStart, self.level.get() as u16);
    }

    fn end_set(&mut self, out: &mut Out<'_>) {
        let Phase::ActiveSet(n) = self.phase else {
            return;
        };
        out.event(EventCode::SetEnd, self.reps_in_set.min(u16::MAX as u32) as u16);
        self.sets_completed += 1;
        if self.sets_completed >= self.regimen.sets {
            self.phase = Phase::Completed;
            out.event(EventCode::Completed, self.total_reps.min(u16::MAX as u32) as u16);
            return;
        }
        if !self.set.level_changed {
            let decision = adjust_intensity(
                self.level,
                self.regimen.ceiling(),
                &self.set.vitals(out.t),
                &self.safety,
            );
            let reason = match decision.reason {
                AdjustReason::StepUp => Some(LevelReason::StepUp),
                AdjustReason::RrHigh => Some(LevelReason::RrHigh),
                _ => None,
            };
            if let Some(reason) = reason {
                if decision.level != self.level {
                    self.change_level(decision.level, reason, out);
                }
            }
        }
        self.phase = Phase::Rest(n);
        self.rest_until = Some(out.t.saturating_add(self.regimen.rest_s.saturating_mul(1000)));
        out.event(EventCode::RestStart, self.regimen.rest_s.min(u16::MAX as u32) as u16);
    }

    fn change_level(&mut self, level: IntensityLevel, reason: LevelReason, out: &mut Out<'_>) {
        self.level = level;
        self.set.level_changed = true;
        out.event(EventCode::LevelChange, level_change_arg(level, reason));
    }

    fn pause(&mut self, reason: PauseReason, out: &mut Out<'_>) {
        let from = match self.phase {
            Phase::ActiveSet(n) => PausedFrom::ActiveSet(n),
            Phase::Rest(n) => {
                self.rest_remaining_ms = Some(self.rest_until.map_or(0, |u| u.saturating_sub(out.t)));
                PausedFrom::Rest(n)
            }
            _ => return,
        };
        self.phase = Phase::Paused(from);
        self.pause_reason = Some(reason);
        let arg = match reason {
            PauseReason::User => USER_ARG,
            PauseReason::Desaturation => WarningCode::Desaturation.code() as u16,
        };
        out.event(EventCode::Paused, arg);
    }

    fn abort(&mut self, cause: WarningCode, out: &mut Out<'_>) {
        self.phase = Phase::Aborted;
        out.event(EventCode::Warning, cause.code() as u16);
        out.event(EventCode::Aborted, cause.code() as u16);
        out.out.commands.push(ControllerCommand::Stop);
        out.out.commands.push(ControllerCommand::Notify(cause));
    }
}

fn input_kind(i: &SessionInput) -> &'static str {
    match i {
        SessionInput::Rep(_) => "Rep",
        SessionInput::Vitals(_) => "Vitals",
        SessionInput::Air(_) => "Air",
        SessionInput::Command { .. } => "Command",
        SessionInput::Tick(_) => "Tick",
    }
}
