//! The simulated device: generators, on-board DSP and session controller,
//! driven tick by tick and speaking the wire protocol.

use std::collections::VecDeque;
use std::sync::mpsc::Receiver;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::generator::{AccelSynth, PpgSynth, ACCEL_DT_MS, PPG_DT_MS};
use super::scenario::{ScenarioField, ScenarioScript, SimParams, SteeringCommand, UserCommand};
use super::transport::Transport;
use super::SimError;
use crate::dsp::{
    hr_from_window, rr_from_window, spo2_from_window, AccelSample, PpgSample, PpgWindow, Quality, RepCounter,
    Spo2Calibration, VitalKind, VitalsReading, ACCEL_FS_HZ, PPG_FS_HZ, RR_WINDOW_S, SPO2_WINDOW_S,
};
use crate::protocol::{
    quality, AccelTriple, AckStatus, BindingToken, CommandCode, Decoder, EventCode, FrameWriter, Message,
    PpgPair, WarningCode,
};
use crate::record::{from_tenths, to_tenths};
use crate::session::{AirQualitySample, ControllerCommand, Phase, SessionEvent, SessionInput, SessionState};

pub const TICK_MS: u32 = 10;
pub const PPG_BATCH: usize = 50;
pub const ACCEL_BATCH: usize = 25;
pub const AIR_PERIOD_MS: u32 = 10_000;
pub const METRICS_PERIOD_MS: u32 = 1_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockMode {
    /// One tick per 10 ms of wall time.
    Real,
    /// Ticks as fast as the host can take them.
    #[default]
    Accelerated,
}

impl std::str::FromStr for ClockMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "real" => Ok(Self::Real),
            "accelerated" => Ok(Self::Accelerated),
            _ => Err(format!("unknown clock {s:?}, expected real or accelerated")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunOutcome {
    Completed,
    Aborted,
    /// The air check failed; no set was started.
    Refused,
    /// `max_duration_s` elapsed before the session ended.
    TimedOut,
    TransportError,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SteeringSource {
    Timeline,
    Live,
    Wire,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteeringLogEntry {
    pub t_ms: u32,
    pub source: SteeringSource,
    pub command: SteeringCommand,
    /// Rejection reason; `None` when applied.
    pub error: Option<String>,
}

/// Generator settings in effect from `t_ms` on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetPoint {
    pub t_ms: u32,
    pub spo2: f64,
    pub rr_bpm: f64,
    pub hr_bpm: f64,
    pub pm25: f64,
    pub pm10: f64,
}

impl TargetPoint {
    fn of(t_ms: u32, p: &SimParams) -> Self {
        Self {
            t_ms,
            spo2: p.physio.spo2_target,
            rr_bpm: p.physio.resp_freq_hz * 60.0,
            hr_bpm: p.physio.hr_bpm,
            pm25: p.air.pm25,
            pm10: p.air.pm10,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Reps the simulated user performed, by the set they started in.
    pub per_set_reps: Vec<u32>,
    /// Completion time of every performed rep.
    pub rep_times_ms: Vec<u32>,
    pub targets: Vec<TargetPoint>,
}

impl GroundTruth {
    pub fn total_reps(&self) -> u32 {
        self.per_set_reps.iter().sum()
    }

    /// The generator settings in effect at `t_ms`.
    pub fn target_at(&self, t_ms: u32) -> Option<&TargetPoint> {
        self.targets.iter().rev().find(|p| p.t_ms <= t_ms)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSample {
    pub t_ms: u32,
    pub spo2: Option<f64>,
    pub rr: Option<f64>,
    pub hr: Option<f64>,
    pub rep_count: u32,
    pub quality_flags: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AckRecord {
    pub acked_seq: u16,
    pub command_code: u8,
    pub arg: u16,
    pub status: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceRunReport {
    pub outcome: RunOutcome,
    pub error: Option<String>,
    pub duration_ms: u32,
    pub frames_sent: u64,
    pub truth: GroundTruth,
    /// Reps credited by the controller, per started set.
    pub counted_per_set: Vec<u32>,
    pub metrics: Vec<MetricSample>,
    pub events: Vec<SessionEvent>,
    pub notifications: Vec<WarningCode>,
    pub steering: Vec<SteeringLogEntry>,
    pub acks: Vec<AckRecord>,
}

impl DeviceRunReport {
    pub fn counted_reps(&self) -> u32 {
        self.counted_per_set.iter().sum()
    }

    /// Short human-readable summary, one fact per line.
    pub fn summary_lines(&self) -> Vec<String> {
        let mut lines = vec![
            format!("outcome {:?}", self.outcome),
            format!("reps {}/{}", self.counted_reps(), self.truth.total_reps()),
            format!("sets {}", self.counted_per_set.len()),
            format!("duration {:.1} s", self.duration_ms as f64 / 1000.0),
            format!("frames {}", self.frames_sent),
        ];
        let warnings: Vec<_> = self
            .events
            .iter()
            .filter(|e| e.code == EventCode::Warning)
            .filter_map(|e| WarningCode::from_code(e.arg as u8))
            .map(|w| w.name())
            .collect();
        if !warnings.is_empty() {
            lines.push(format!("warnings {}", warnings.join(",")));
        }
        if let Some(e) = &self.error {
            lines.push(format!("error {e}"));
        }
        lines
    }
}

/// Options that are not part of the scenario itself.
#[derive(Debug, Default)]
pub struct DeviceOptions {
    pub clock: ClockMode,
    /// Sent as the first 16 bytes of the stream when set.
    pub token: Option<BindingToken>,
    /// Live steering from outside the run, applied at the next tick.
    pub steering: Option<Receiver<SteeringCommand>>,
}

/// The device state; advance it with [`Simulator::tick`].
pub struct Simulator {
    script: ScenarioScript,
    params: SimParams,
    t_ms: u32,
    token_low16: u16,
    ppg: PpgSynth,
    accel: AccelSynth,
    counter: RepCounter,
    calibration: Spo2Calibration,
    controller: SessionState,
    ppg_history: VecDeque<PpgSample>,
    ppg_batch: Vec<PpgSample>,
    accel_batch: Vec<AccelSample>,
    timeline_next: usize,
    actions_next: usize,
    air_dirty: bool,
    generated_in_set: u32,
    current_set: Option<u32>,
    outbox: Vec<Message>,
    report: DeviceRunReport,
    finished: Option<RunOutcome>,
}

const PPG_HISTORY: usize = (RR_WINDOW_S * PPG_FS_HZ) as usize;

impl Simulator {
    pub fn new(script: ScenarioScript, token: BindingToken) -> Result<Self, SimError> {
        script.validate()?;
        let params = SimParams::from(&script);
        let counter = RepCounter::new(script.rep_counter.unwrap_or_default())
            .map_err(|e| SimError::Parameter(e.to_string()))?;
        let controller = SessionState::new(script.regimen, script.safety.unwrap_or_default())
            .map_err(|e| SimError::Parameter(e.to_string()))?;
        let seed = script.seed;
        let report = DeviceRunReport {
            outcome: RunOutcome::TimedOut,
            error: None,
            duration_ms: 0,
            frames_sent: 0,
            truth: GroundTruth {
                targets: vec![TargetPoint::of(0, &params)],
                ..Default::default()
            },
            counted_per_set: Vec::new(),
            metrics: Vec::new(),
            events: Vec::new(),
            notifications: Vec::new(),
            steering: Vec::new(),
            acks: Vec::new(),
        };
        Ok(Self {
            calibration: script.spo2_calibration.unwrap_or_default(),
            script,
            params,
            t_ms: 0,
            token_low16: token.low16(),
            ppg: PpgSynth::new(seed),
            accel: AccelSynth::new(seed),
            counter,
            controller,
            ppg_history: VecDeque::with_capacity(PPG_HISTORY),
            ppg_batch: Vec::with_capacity(PPG_BATCH),
            accel_batch: Vec::with_capacity(ACCEL_BATCH),
            timeline_next: 0,
            actions_next: 0,
            air_dirty: true,
            generated_in_set: 0,
            current_set: None,
            outbox: Vec::new(),
            report,
            finished: None,
        })
    }

    pub fn now_ms(&self) -> u32 {
        self.t_ms
    }

    pub fn params(&self) -> &SimParams {
        &self.params
    }

    pub fn controller(&self) -> &SessionState {
        &self.controller
    }

    pub fn report(&self) -> &DeviceRunReport {
        &self.report
    }

    pub fn finished(&self) -> Option<RunOutcome> {
        self.finished
    }

    /// Changes one generator or air parameter; the next sample reflects it.
    /// Out-of-range values leave the state untouched.
    pub fn apply_steering(&mut self, cmd: SteeringCommand) -> Result<(), SimError> {
        self.steer(cmd, SteeringSource::Live)
    }

    fn steer(&mut self, cmd: SteeringCommand, source: SteeringSource) -> Result<(), SimError> {
        let result = self.params.with(&cmd);
        self.report.steering.push(SteeringLogEntry {
            t_ms: self.t_ms,
            source,
            command: cmd,
            error: result.as_ref().err().map(|e| e.to_string()),
        });
        let next = result?;
        if matches!(cmd.field, ScenarioField::Pm25 | ScenarioField::Pm10) && next.air != self.params.air {
            self.air_dirty = true;
        }
        self.params = next;
        let point = TargetPoint::of(self.t_ms, &self.params);
        match self.report.truth.targets.last_mut() {
            Some(last) if last.t_ms == self.t_ms => *last = point,
            _ => self.report.truth.targets.push(point),
        }
        Ok(())
    }

    /// Handles a command frame from the host and returns the Ack status.
    pub fn handle_command(&mut self, code: u8, arg: u16) -> AckStatus {
        let Some(cmd) = CommandCode::from_code(code) else {
            return AckStatus::Unsupported;
        };
        let controller_cmd = match cmd {
            CommandCode::Start => ControllerCommand::Start,
            CommandCode::Pause => ControllerCommand::Pause,
            CommandCode::Resume => ControllerCommand::Resume,
            CommandCode::Stop => ControllerCommand::Stop,
            CommandCode::SetIntensity => match u8::try_from(arg) {
                Ok(l @ 1..=5) => ControllerCommand::SetIntensity(l),
                _ => return AckStatus::OutOfRange,
            },
            CommandCode::RequestStatus => {
                if self.finished.is_some() {
                    return AckStatus::Rejected;
                }
                self.queue_metrics();
                return AckStatus::Ok;
            }
            other => {
                let Some(steer) = SteeringCommand::from_wire(other, arg) else {
                    return AckStatus::Unsupported;
                };
                return match self.steer(steer, SteeringSource::Wire) {
                    Ok(()) => AckStatus::Ok,
                    Err(_) => AckStatus::OutOfRange,
                };
            }
        };
        if self.finished.is_some() {
            return AckStatus::Rejected;
        }
        if self.command(controller_cmd) {
            AckStatus::Ok
        } else {
            AckStatus::Rejected
        }
    }

    fn command(&mut self, command: ControllerCommand) -> bool {
        let out = self.controller.step(SessionInput::Command {
            t_ms: self.t_ms,
            command,
        });
        let accepted = out.accepted();
        self.absorb(out);
        accepted
    }

    fn absorb(&mut self, out: crate::session::StepOutput) {
        if self.controller.is_terminal() && self.finished.is_none() {
            // partial batches go out before the terminal event closes the log
            self.flush_batches();
        }
        for e in out.events {
            match e.code {
                EventCode::SetStart => {
                    self.report.counted_per_set.push(0);
                    self.report.truth.per_set_reps.push(0);
                    self.generated_in_set = 0;
                    self.current_set = Some(self.report.counted_per_set.len() as u32);
                }
                EventCode::Rep => {
                    if let Some(c) = self.report.counted_per_set.last_mut() {
                        *c += 1;
                    }
                }
                _ => {}
            }
            self.outbox.push(Message::SessionEvent {
                t_ms: e.t_ms,
                event_code: e.code.code(),
                arg: e.arg,
            });
            self.report.events.push(e);
        }
        for c in out.commands {
            if let ControllerCommand::Notify(w) = c {
                self.report.notifications.push(w);
            }
        }
        if self.finished.is_none() {
            match self.controller.phase() {
                Phase::Completed => self.finished = Some(RunOutcome::Completed),
                Phase::Aborted => self.finished = Some(RunOutcome::Aborted),
                _ => {}
            }
            if let Some(o) = self.finished {
                self.report.outcome = o;
            }
        }
    }

    /// Advances one 10 ms tick and returns the messages to send, in order.
    /// After the session ends the remaining partial batches are flushed
    /// and later ticks return nothing.
    pub fn tick(&mut self) -> Vec<Message> {
        if self.finished.is_some() {
            return Vec::new();
        }
        let t = self.t_ms;
        if t == 0 {
            self.outbox.push(Message::SessionEvent {
                t_ms: 0,
                event_code: EventCode::SessionStart.code(),
                arg: self.token_low16,
            });
        }

        while let Some(e) = self.script.timeline.get(self.timeline_next) {
            if (e.t_s * 1000.0).round() as u64 > t as u64 {
                break;
            }
            let cmd = SteeringCommand::new(e.field, e.value);
            self.timeline_next += 1;
            // validated up front, so this cannot fail
            let _ = self.steer(cmd, SteeringSource::Timeline);
        }

        if t.is_multiple_of(AIR_PERIOD_MS) || self.air_dirty {
            self.air_dirty = false;
            let air = self.params.air;
            self.outbox.push(Message::AirQuality {
                t_ms: t,
                pm25_tenths: to_tenths(air.pm25),
                pm10_tenths: to_tenths(air.pm10),
            });
            let sample = AirQualitySample {
                t_ms: t,
                pm25: from_tenths(to_tenths(air.pm25)),
                pm10: from_tenths(to_tenths(air.pm10)),
            };
            let out = self.controller.step(SessionInput::Air(sample));
            self.absorb(out);
        }

        if t == 0 {
            self.command(ControllerCommand::Start);
            if self.controller.phase() == Phase::Idle {
                self.finished = Some(RunOutcome::Refused);
            }
        }

        while let Some(a) = self.script.user_actions.get(self.actions_next) {
            if (a.t_s * 1000.0).round() as u64 > t as u64 {
                break;
            }
            self.actions_next += 1;
            let cmd = match a.command {
                UserCommand::Pause => ControllerCommand::Pause,
                UserCommand::Resume => ControllerCommand::Resume,
                UserCommand::Stop => ControllerCommand::Stop,
                UserCommand::SetIntensity => ControllerCommand::SetIntensity(a.arg.min(255) as u8),
            };
            if self.finished.is_none() {
                self.command(cmd);
            }
        }

        if self.finished.is_none() {
            self.sample_sensors(t);
        }

        if self.finished.is_none() && t > 0 && t.is_multiple_of(METRICS_PERIOD_MS) {
            self.queue_metrics();
        }

        if self.finished.is_none() {
            let out = self.controller.step(SessionInput::Tick(t));
            self.absorb(out);
        }

        if self.finished.is_none() && t as f64 >= self.script.max_duration_s * 1000.0 {
            self.command(ControllerCommand::Stop);
            self.finished = Some(RunOutcome::TimedOut);
        }

        if self.finished.is_some() {
            self.flush_batches();
            self.report.outcome = self.finished.unwrap_or(RunOutcome::TimedOut);
        }
        self.report.duration_ms = t;
        self.t_ms = t + TICK_MS;
        std::mem::take(&mut self.outbox)
    }

    fn sample_sensors(&mut self, t: u32) {
        let s = self.ppg.next(t, &self.params.physio);
        if self.ppg_history.len() == PPG_HISTORY {
            self.ppg_history.pop_front();
        }
        self.ppg_history.push_back(s);
        self.ppg_batch.push(s);
        if self.ppg_batch.len() == PPG_BATCH {
            self.flush_ppg();
        }

        if t.is_multiple_of(ACCEL_DT_MS) {
            let lifting = matches!(self.controller.phase(), Phase::ActiveSet(_))
                && self
                    .params
                    .effort
                    .reps_intended
                    .is_none_or(|n| self.generated_in_set < n);
            let was_mid = self.accel.mid_rep();
            let (a, done) = self.accel.next(t, &self.params.effort, lifting);
            if !was_mid && (self.accel.mid_rep() || done.is_some()) {
                self.generated_in_set += 1;
                if let Some(n) = self.report.truth.per_set_reps.last_mut() {
                    *n += 1;
                }
            }
            self.report.truth.rep_times_ms.extend(done);
            self.accel_batch.push(a);
            if self.accel_batch.len() == ACCEL_BATCH {
                self.flush_accel();
            }
            // the counter only sees ordered samples from the generator
            if let Ok(Some(rep)) = self.counter.step(a) {
                let out = self.controller.step(SessionInput::Rep(rep));
                self.absorb(out);
            }
        }
    }

    fn queue_metrics(&mut self) {
        let t = self.t_ms;
        let n_short = (SPO2_WINDOW_S * PPG_FS_HZ) as usize;
        let hist = self.ppg_history.make_contiguous();
        let reading = |kind: VitalKind, need: usize, f: &dyn Fn(&PpgWindow<'_>) -> Option<VitalsReading>| {
            if hist.len() < need {
                return VitalsReading { t_ms: t, kind, value: 0.0, quality: Quality::NoBeats };
            }
            let w = PpgWindow::new(&hist[hist.len() - need..], PPG_FS_HZ);
            let mut r = f(&w).unwrap_or(VitalsReading { t_ms: t, kind, value: 0.0, quality: Quality::OutOfRange });
            r.t_ms = t;
            // the device acts on what it reports
            r.value = from_tenths(to_tenths(r.value));
            r
        };
        let cal = self.calibration;
        let spo2 = reading(VitalKind::Spo2, n_short, &|w| spo2_from_window(w, &cal).ok());
        let hr = reading(VitalKind::HeartRate, n_short, &|w| hr_from_window(w).ok());
        let rr = reading(VitalKind::RespRate, PPG_HISTORY, &|w| rr_from_window(w).ok());

        let mut flags = 0u8;
        for (r, bit) in [(&spo2, quality::SPO2_VALID), (&rr, quality::RR_VALID), (&hr, quality::HR_VALID)] {
            flags |= match r.quality {
                Quality::Valid => bit,
                Quality::LowPerfusion => quality::LOW_PERFUSION,
                Quality::NoDominantPeak => quality::NO_DOMINANT_PEAK,
                Quality::NoBeats => quality::NO_BEATS,
                Quality::OutOfRange => quality::OUT_OF_RANGE,
            };
        }
        let reps = self.controller.total_reps();
        let value = |r: &VitalsReading| if r.is_valid() { to_tenths(r.value) } else { 0 };
        self.outbox.push(Message::DerivedMetrics {
            t_ms: t,
            spo2_tenths: value(&spo2),
            rr_tenths: value(&rr),
            hr_tenths: value(&hr),
            rep_count: reps.min(u16::MAX as u32) as u16,
            quality_flags: flags,
        });
        let valid = |r: &VitalsReading| r.is_valid().then_some(r.value);
        self.report.metrics.push(MetricSample {
            t_ms: t,
            spo2: valid(&spo2),
            rr: valid(&rr),
            hr: valid(&hr),
            rep_count: reps,
            quality_flags: flags,
        });
        for r in [spo2, rr, hr] {
            if self.controller.is_terminal() {
                break;
            }
            let out = self.controller.step(SessionInput::Vitals(r));
            self.absorb(out);
        }
    }

    fn flush_ppg(&mut self) {
        if let Some(first) = self.ppg_batch.first() {
            self.outbox.push(Message::PpgBatch {
                t0_ms: first.t_ms,
                dt_us: (PPG_DT_MS * 1000) as u16,
                samples: self.ppg_batch.iter().map(|s| PpgPair { red: s.red, ir: s.ir }).collect(),
            });
            self.ppg_batch.clear();
        }
    }

    fn flush_accel(&mut self) {
        if let Some(first) = self.accel_batch.first() {
            self.outbox.push(Message::AccelBatch {
                t0_ms: first.t_ms,
                dt_us: (1_000_000.0 / ACCEL_FS_HZ) as u16,
                samples: self.accel_batch.iter().map(|s| AccelTriple { x: s.x, y: s.y, z: s.z }).collect(),
            });
            self.accel_batch.clear();
        }
    }

    fn flush_batches(&mut self) {
        self.flush_ppg();
        self.flush_accel();
    }

    pub fn into_report(self) -> DeviceRunReport {
        self.report
    }
}

/// Runs a scenario to its end over `transport`. Scenario errors are returned
/// before anything is sent; transport failures end the run and are recorded
/// in the report.
pub fn run_device(
    script: ScenarioScript,
    transport: &mut dyn Transport,
    options: DeviceOptions,
) -> Result<DeviceRunReport, SimError> {
    let token = options.token.unwrap_or_default();
    let mut sim = Simulator::new(script, token)?;
    let mut writer = FrameWriter::new();
    let mut decoder = Decoder::new();
    let started = Instant::now();

    let fail = |mut sim: Simulator, e: String| {
        sim.report.outcome = RunOutcome::TransportError;
        sim.report.error = Some(e);
        Ok(sim.into_report())
    };

    if options.token.is_some() {
        if let Err(e) = transport.send(&token.0) {
            return fail(sim, e.to_string());
        }
    }

    loop {
        if let Some(rx) = &options.steering {
            while let Ok(cmd) = rx.try_recv() {
                let _ = sim.apply_steering(cmd);
            }
        }
        match transport.try_recv() {
            Ok(bytes) if !bytes.is_empty() => {
                for frame in decoder.feed(&bytes) {
                    if let Message::Command { command_code, arg } = frame.message {
                        let status = sim.handle_command(command_code, arg);
                        sim.report.acks.push(AckRecord {
                            acked_seq: frame.seq,
                            command_code,
                            arg,
                            status: status.code(),
                        });
                        sim.outbox.push(Message::Ack {
                            acked_seq: frame.seq,
                            status: status.code(),
                        });
                    }
                }
            }
            Ok(_) => {}
            Err(e) => return fail(sim, e.to_string()),
        }

        let done_before = sim.finished().is_some();
        let mut messages = std::mem::take(&mut sim.outbox);
        if !done_before {
            messages.extend(sim.tick());
        }
        let mut bytes = Vec::new();
        for m in &messages {
            match writer.encode(m) {
                Ok((frame, _)) => bytes.extend_from_slice(&frame),
                Err(e) => return fail(sim, format!("encode: {e}")),
            }
        }
        sim.report.frames_sent += messages.len() as u64;
        if !bytes.is_empty() {
            if let Err(e) = transport.send(&bytes) {
                return fail(sim, e.to_string());
            }
        }
        if done_before {
            break;
        }
        if options.clock == ClockMode::Real {
            let due = started + Duration::from_millis(sim.now_ms() as u64);
            let now = Instant::now();
            if due > now {
                std::thread::sleep(due - now);
            }
        }
    }
    if let Err(e) = transport.flush() {
        return fail(sim, e.to_string());
    }
    Ok(sim.into_report())
}
