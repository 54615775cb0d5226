use proptest::prelude::*;

use pulmobell::dsp::{Quality, RepEvent, VitalKind, VitalsReading};
use pulmobell::protocol::{EventCode, WarningCode};
use pulmobell::record::{RecordKind, SessionEventRecord};
use pulmobell::session::{
    summarize, AirBand, AirQualitySample, ControllerCommand, Diagnostic, LevelReason, Outcome,
    PauseReason, PausedFrom, Phase, Regimen, SafetyConfig, SessionError, SessionEvent, SessionInput,
    SessionState, StepOutput, USER_ARG,
};

fn state(regimen: Regimen) -> SessionState {
    SessionState::new(regimen, SafetyConfig::default()).unwrap()
}

fn air(t: u32, pm25: f64, pm10: f64) -> SessionInput {
    SessionInput::Air(AirQualitySample { t_ms: t, pm25, pm10 })
}

fn vital(t: u32, kind: VitalKind, value: f64) -> SessionInput {
    SessionInput::Vitals(VitalsReading { t_ms: t, kind, value, quality: Quality::Valid })
}

fn spo2(t: u32, v: f64) -> SessionInput {
    vital(t, VitalKind::Spo2, v)
}

fn rr(t: u32, v: f64) -> SessionInput {
    vital(t, VitalKind::RespRate, v)
}

fn rep(t: u32) -> SessionInput {
    SessionInput::Rep(RepEvent { t_ms: t, duration_s: 4.0, peak_mg: 1300.0 })
}

fn cmd(t: u32, command: ControllerCommand) -> SessionInput {
    SessionInput::Command { t_ms: t, command }
}

fn codes(out: &StepOutput) -> Vec<EventCode> {
    out.events.iter().map(|e| e.code).collect()
}

/// Starts a session under good air and returns it in `ActiveSet(1)`.
fn started(regimen: Regimen) -> SessionState {
    let mut s = state(regimen);
    s.step(air(0, 5.0, 10.0));
    let out = s.step(cmd(0, ControllerCommand::Start));
    assert_eq!(codes(&out), vec![EventCode::SetStart]);
    s
}

/// Converts controller events to log records as the host would store them.
fn to_log(events: &[SessionEvent]) -> Vec<SessionEventRecord> {
    let mut log = vec![SessionEventRecord {
        t_ms: 0,
        recv_seq: 0,
        kind: RecordKind::Event { code: EventCode::SessionStart.code(), arg: 0 },
        payload: None,
    }];
    for (i, e) in events.iter().enumerate() {
        let kind = match e.code {
            EventCode::Rep => RecordKind::Rep { count: e.arg },
            c => RecordKind::Event { code: c.code(), arg: e.arg },
        };
        log.push(SessionEventRecord { t_ms: e.t_ms, recv_seq: i as u16 + 1, kind, payload: None });
    }
    log
}

#[test]
fn poor_air_blocks_start() {
    let mut s = state(Regimen::default());
    s.step(air(0, 50.0, 20.0));
    let out = s.step(cmd(0, ControllerCommand::Start));
    assert_eq!(s.phase(), Phase::Idle);
    assert_eq!(out.events, vec![SessionEvent { t_ms: 0, code: EventCode::Warning, arg: WarningCode::AirPoor.code() as u16 }]);
    assert_eq!(out.commands, vec![ControllerCommand::Notify(WarningCode::AirPoor)]);
}

#[test]
fn moderate_air_warns_and_starts() {
    let mut s = state(Regimen::default());
    s.step(air(0, 20.0, 20.0));
    let out = s.step(cmd(0, ControllerCommand::Start));
    assert_eq!(s.phase(), Phase::ActiveSet(1));
    assert_eq!(codes(&out), vec![EventCode::Warning, EventCode::SetStart]);
    assert_eq!(out.commands, vec![ControllerCommand::Notify(WarningCode::AirModerate)]);
    assert_eq!(out.events[1].arg, 2);
}

#[test]
fn start_waits_for_air_sample() {
    let mut s = state(Regimen::default());
    let out = s.step(cmd(0, ControllerCommand::Start));
    assert_eq!(s.phase(), Phase::AirCheck);
    assert!(out.events.is_empty());
    let out = s.step(air(500, 15.0, 45.0));
    assert_eq!(s.air_band(), Some(AirBand::Good));
    assert_eq!(s.phase(), Phase::ActiveSet(1));
    assert_eq!(codes(&out), vec![EventCode::SetStart]);
}

#[test]
fn tenth_rep_ends_set() {
    let mut s = started(Regimen::default());
    for i in 1..10 {
        let out = s.step(rep(i * 4000));
        assert_eq!(out.events, vec![SessionEvent { t_ms: i * 4000, code: EventCode::Rep, arg: i as u16 }]);
    }
    let out = s.step(rep(40_000));
    assert_eq!(s.phase(), Phase::Rest(1));
    assert_eq!(codes(&out), vec![EventCode::Rep, EventCode::SetEnd, EventCode::RestStart]);
    assert_eq!(out.events[1].arg, 10);
    assert_eq!(out.events[2].arg, 90);
}

#[test]
fn desaturation_aborts_immediately() {
    let mut s = started(Regimen::default());
    let out = s.step(spo2(5000, 84.5));
    assert_eq!(s.phase(), Phase::Aborted);
    assert_eq!(out.commands, vec![ControllerCommand::Stop, ControllerCommand::Notify(WarningCode::Desaturation)]);
    assert_eq!(codes(&out), vec![EventCode::Warning, EventCode::Aborted]);
}

#[test]
fn spo2_at_abort_threshold_does_not_abort() {
    let mut s = started(Regimen::default());
    s.step(spo2(1000, 85.0));
    assert_eq!(s.phase(), Phase::ActiveSet(1));
}

#[test]
fn sustained_low_spo2_pauses_after_window() {
    let mut s = started(Regimen::default());
    for t in (1..=10).map(|k| k * 1000) {
        s.step(spo2(t, 88.0));
        assert_eq!(s.phase(), Phase::ActiveSet(1), "paused early at {t}");
    }
    let out = s.step(spo2(11_000, 88.0));
    assert_eq!(s.phase(), Phase::Paused(PausedFrom::ActiveSet(1)));
    assert_eq!(s.pause_reason(), Some(PauseReason::Desaturation));
    assert_eq!(codes(&out), vec![EventCode::Warning, EventCode::Paused]);
    assert_eq!(out.commands, vec![ControllerCommand::Notify(WarningCode::Desaturation)]);

    // reps are not counted while paused, and resume returns to the set
    assert!(s.step(rep(12_000)).events.is_empty());
    let out = s.step(cmd(13_000, ControllerCommand::Resume));
    assert_eq!(codes(&out), vec![EventCode::Resumed]);
    assert_eq!(s.phase(), Phase::ActiveSet(1));
}

#[test]
fn recovery_resets_low_spo2_window() {
    let mut s = started(Regimen::default());
    for t in (1..=8).map(|k| k * 1000) {
        s.step(spo2(t, 88.0));
    }
    s.step(spo2(9000, 93.0));
    for t in (10..=18).map(|k| k * 1000) {
        s.step(spo2(t, 88.0));
    }
    assert_eq!(s.phase(), Phase::ActiveSet(1));
}

#[test]
fn sustained_high_rr_steps_down_once() {
    let mut s = started(Regimen { start_level: 3, ..Regimen::default() });
    let mut events = Vec::new();
    for t in (1..=40).map(|k| k * 1000) {
        events.extend(s.step(rr(t, 32.0)).events);
    }
    let changes: Vec<_> = events.iter().filter(|e| e.code == EventCode::LevelChange).collect();
    assert_eq!(changes.len(), 1);
    assert_eq!(changes[0].t_ms, 16_000);
    assert_eq!(changes[0].arg, 2 | (LevelReason::RrHigh as u16) << 8);
    assert_eq!(events.iter().filter(|e| e.code == EventCode::Warning).count(), 1);
    assert_eq!(s.level().get(), 2);

    // no step-up at the end of a set that already changed level
    for i in 0..10 {
        s.step(rep(41_000 + i * 4000));
    }
    assert_eq!(s.phase(), Phase::Rest(1));
    assert_eq!(s.level().get(), 2);
}

#[test]
fn comfortable_set_steps_up() {
    let mut s = started(Regimen::default());
    s.step(spo2(1000, 96.0));
    s.step(rr(1000, 18.0));
    let mut out = StepOutput::default();
    for i in 1..=10 {
        out = s.step(rep(i * 4000));
    }
    assert_eq!(
        codes(&out),
        vec![EventCode::Rep, EventCode::SetEnd, EventCode::LevelChange, EventCode::RestStart]
    );
    assert_eq!(out.events[2].arg, 3);
    s.step(SessionInput::Tick(40_000 + 89_990));
    assert_eq!(s.phase(), Phase::Rest(1));
    let out = s.step(SessionInput::Tick(130_000));
    assert_eq!(s.phase(), Phase::ActiveSet(2));
    assert_eq!(out.events, vec![SessionEvent { t_ms: 130_000, code: EventCode::SetStart, arg: 3 }]);
    assert_eq!(s.reps_target(), 10);
}

#[test]
fn step_up_needs_vitals() {
    let mut s = started(Regimen::default());
    for i in 1..=10 {
        s.step(rep(i * 4000));
    }
    assert_eq!(s.level().get(), 2);
}

#[test]
fn step_up_respects_ceiling() {
    let mut s = started(Regimen { max_level: 2, ..Regimen::default() });
    s.step(spo2(1000, 98.0));
    s.step(rr(1000, 12.0));
    for i in 1..=10 {
        s.step(rep(i * 4000));
    }
    assert_eq!(s.level().get(), 2);
}

#[test]
fn poor_air_mid_session_warns_once_and_continues() {
    let mut s = started(Regimen::default());
    let out = s.step(air(10_000, 60.0, 20.0));
    assert_eq!(codes(&out), vec![EventCode::Warning]);
    assert_eq!(out.commands, vec![ControllerCommand::Notify(WarningCode::AirPoor)]);
    assert!(s.step(air(20_000, 60.0, 20.0)).events.is_empty());
    assert_eq!(s.phase(), Phase::ActiveSet(1));
}

#[test]
fn invalid_spo2_run_warns_sensor_quality() {
    let mut s = started(Regimen::default());
    let bad = |t| SessionInput::Vitals(VitalsReading { t_ms: t, kind: VitalKind::Spo2, value: 0.0, quality: Quality::LowPerfusion });
    let mut warned = Vec::new();
    for k in 1..=15 {
        warned.extend(s.step(bad(k * 1000)).commands);
    }
    assert_eq!(warned, vec![ControllerCommand::Notify(WarningCode::SensorQuality)]);
    assert_eq!(s.phase(), Phase::ActiveSet(1));
}

#[test]
fn user_pause_in_rest_keeps_remaining_time() {
    let mut s = started(Regimen { rest_s: 60, ..Regimen::default() });
    for i in 1..=10 {
        s.step(rep(i * 1000));
    }
    // rest runs 10 s .. 70 s; pause with 40 s left
    let out = s.step(cmd(30_000, ControllerCommand::Pause));
    assert_eq!(out.events, vec![SessionEvent { t_ms: 30_000, code: EventCode::Paused, arg: USER_ARG }]);
    assert_eq!(s.phase(), Phase::Paused(PausedFrom::Rest(1)));
    s.step(SessionInput::Tick(100_000));
    assert_eq!(s.phase(), Phase::Paused(PausedFrom::Rest(1)));
    s.step(cmd(100_000, ControllerCommand::Resume));
    s.step(SessionInput::Tick(139_990));
    assert_eq!(s.phase(), Phase::Rest(1));
    s.step(SessionInput::Tick(140_000));
    assert_eq!(s.phase(), Phase::ActiveSet(2));
}

#[test]
fn user_stop_aborts_from_any_phase() {
    let mut s = state(Regimen::default());
    let out = s.step(cmd(0, ControllerCommand::Stop));
    assert_eq!(s.phase(), Phase::Aborted);
    assert_eq!(out.events[0].arg, USER_ARG);
}

#[test]
fn user_intensity_below_current_reps_ends_set() {
    let mut s = started(Regimen { start_level: 4, ..Regimen::default() });
    for i in 1..=9 {
        s.step(rep(i * 1000));
    }
    let out = s.step(cmd(10_000, ControllerCommand::SetIntensity(1)));
    assert_eq!(codes(&out), vec![EventCode::LevelChange, EventCode::SetEnd, EventCode::RestStart]);
    assert_eq!(out.events[0].arg, 1 | (LevelReason::User as u16) << 8);

    let out = s.step(cmd(11_000, ControllerCommand::SetIntensity(9)));
    assert!(out.events.is_empty());
    assert_eq!(out.diagnostics.len(), 1);
}

#[test]
fn lowering_intensity_while_paused_ends_set_on_resume() {
    let mut s = started(Regimen { start_level: 4, ..Regimen::default() });
    for i in 1..=9 {
        s.step(rep(i * 1000));
    }
    s.step(cmd(10_000, ControllerCommand::Pause));
    s.step(cmd(11_000, ControllerCommand::SetIntensity(1)));
    assert_eq!(s.phase(), Phase::Paused(PausedFrom::ActiveSet(1)));
    let out = s.step(cmd(12_000, ControllerCommand::Resume));
    assert_eq!(codes(&out), vec![EventCode::Resumed, EventCode::SetEnd, EventCode::RestStart]);
    assert_eq!(s.phase(), Phase::Rest(1));
}

#[test]
fn inputs_after_end_are_ignored() {
    let mut s = started(Regimen { sets: 1, ..Regimen::default() });
    let mut out = StepOutput::default();
    for i in 1..=10 {
        out = s.step(rep(i * 1000));
    }
    assert_eq!(codes(&out), vec![EventCode::Rep, EventCode::SetEnd, EventCode::Completed]);
    assert_eq!(out.events[2].arg, 10);
    let before = s.clone();
    let out = s.step(rep(20_000));
    assert!(out.events.is_empty() && out.commands.is_empty());
    assert!(matches!(out.diagnostics[..], [Diagnostic::IgnoredInput { t_ms: 20_000, .. }]));
    let out = s.step(spo2(21_000, 70.0));
    assert!(out.events.is_empty() && !out.accepted());
    assert_eq!(s.phase(), before.phase());
    assert_eq!(s.total_reps(), before.total_reps());
}

#[test]
fn invalid_regimen_rejected() {
    for r in [
        Regimen { sets: 0, ..Regimen::default() },
        Regimen { start_level: 0, ..Regimen::default() },
        Regimen { start_level: 4, max_level: 3, ..Regimen::default() },
        Regimen { max_level: 6, ..Regimen::default() },
    ] {
        assert!(matches!(SessionState::new(r, SafetyConfig::default()), Err(SessionError::Validation(_))));
    }
}

fn run_full(regimen: Regimen) -> (SessionState, Vec<SessionEvent>) {
    let mut s = started(regimen);
    let mut events = vec![SessionEvent { t_ms: 0, code: EventCode::SetStart, arg: regimen.start_level as u16 }];
    let mut t = 0;
    while !s.is_terminal() {
        t += 1000;
        let input = if matches!(s.phase(), Phase::ActiveSet(_)) { rep(t) } else { SessionInput::Tick(t) };
        events.extend(s.step(input).events);
    }
    (s, events)
}

#[test]
fn summary_of_full_regimen() {
    let (s, events) = run_full(Regimen::default());
    assert_eq!(s.phase(), Phase::Completed);
    let sum = summarize(&to_log(&events)).unwrap();
    assert_eq!(sum.total_reps, 30);
    assert_eq!(sum.per_set_reps, vec![10, 10, 10]);
    assert_eq!(sum.sets_completed, 3);
    assert_eq!(sum.outcome, Some(Outcome::Completed));
    assert_eq!(sum.level_trajectory, vec![2]);
    assert_eq!(sum.duration_s, events.last().unwrap().t_ms as f64 / 1000.0);
}

#[test]
fn summary_of_abort_in_second_set() {
    let mut s = started(Regimen::default());
    let mut events = vec![SessionEvent { t_ms: 0, code: EventCode::SetStart, arg: 2 }];
    for i in 1..=10 {
        events.extend(s.step(rep(i * 1000)).events);
    }
    events.extend(s.step(SessionInput::Tick(100_000)).events);
    for i in 1..=4 {
        events.extend(s.step(rep(100_000 + i * 1000)).events);
    }
    events.extend(s.step(spo2(106_000, 83.0)).events);
    let sum = summarize(&to_log(&events)).unwrap();
    assert_eq!(sum.outcome, Some(Outcome::Aborted));
    assert_eq!(sum.sets_completed, 1);
    assert_eq!(sum.per_set_reps, vec![10, 4]);
    assert_eq!(sum.total_reps, 14);
    assert_eq!(sum.warnings, 1);
}

#[test]
fn summary_requires_session_start() {
    let mut log = to_log(&[SessionEvent { t_ms: 0, code: EventCode::SetStart, arg: 2 }]);
    log.remove(0);
    assert!(matches!(summarize(&log), Err(SessionError::Log(_))));
    assert!(matches!(summarize(&[]), Err(SessionError::Log(_))));
}

#[test]
fn summary_of_open_session_has_no_outcome() {
    let sum = summarize(&to_log(&[])).unwrap();
    assert_eq!(sum.outcome, None);
    assert_eq!(sum.total_reps, 0);
    assert_eq!(sum.duration_s, 0.0);
}

fn arb_input() -> impl Strategy<Value = (u32, u8, f64)> {
    // (time step ms, kind selector, value)
    (0u32..6000, 0u8..12, 0.0f64..1.0)
}

fn build(dt: u32, sel: u8, x: f64, t: &mut u32) -> SessionInput {
    *t += dt;
    let t = *t;
    match sel {
        0..=3 => rep(t),
        4 => spo2(t, 80.0 + 20.0 * x),
        5 => rr(t, 10.0 + 25.0 * x),
        6 => air(t, 70.0 * x, 60.0 * x),
        7 => SessionInput::Tick(t),
        8 => cmd(t, ControllerCommand::Start),
        9 => cmd(t, if x < 0.5 { ControllerCommand::Pause } else { ControllerCommand::Resume }),
        10 => cmd(t, ControllerCommand::SetIntensity((x * 7.0) as u8)),
        _ => SessionInput::Tick(t + 90_000),
    }
}

fn inputs() -> impl Strategy<Value = Vec<SessionInput>> {
    prop::collection::vec(arb_input(), 1..300).prop_map(|raw| {
        let mut t = 0;
        raw.into_iter().map(|(dt, sel, x)| build(dt, sel, x, &mut t)).collect()
    })
}

fn regimen() -> impl Strategy<Value = Regimen> {
    (1u32..5, 0u32..120, 1u8..=5, 0u8..5).prop_map(|(sets, rest_s, start, extra)| Regimen {
        sets,
        rest_s,
        start_level: start,
        max_level: (start + extra).min(5),
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn level_and_reps_stay_bounded(r in regimen(), seq in inputs()) {
        let mut s = state(r);
        for i in seq {
            s.step(i);
            let l = s.level().get();
            prop_assert!((1..=5).contains(&l));
            if let Phase::ActiveSet(_) = s.phase() {
                prop_assert!(s.reps_in_set() < s.reps_target());
            }
        }
    }

    #[test]
    fn automatic_changes_are_single_steps_once_per_set(r in regimen(), seq in inputs()) {
        let mut s = state(r);
        let mut level = s.level().get();
        let mut auto_in_set = 0;
        for i in seq {
            let out = s.step(i);
            for e in &out.events {
                match e.code {
                    EventCode::SetStart => auto_in_set = 0,
                    EventCode::LevelChange => {
                        let new = (e.arg & 0xFF) as u8;
                        let reason = LevelReason::from_code((e.arg >> 8) as u8).unwrap();
                        if reason != LevelReason::User {
                            prop_assert_eq!(new.abs_diff(level), 1);
                            prop_assert!(new <= r.max_level);
                            auto_in_set += 1;
                            prop_assert!(auto_in_set <= 1);
                        }
                        level = new;
                    }
                    _ => {}
                }
            }
            prop_assert_eq!(level, s.level().get());
        }
    }

    #[test]
    fn critical_spo2_always_aborts_active_session(r in regimen(), seq in inputs(), v in 60.0f64..84.99) {
        let mut s = state(r);
        for i in seq {
            s.step(i);
        }
        let was_active = s.phase().is_active();
        let t = 10_000_000;
        let out = s.step(spo2(t, v));
        if was_active {
            prop_assert_eq!(s.phase(), Phase::Aborted);
            prop_assert!(out.commands.contains(&ControllerCommand::Stop));
        }
    }

    #[test]
    fn terminal_phases_absorb(r in regimen(), seq in inputs(), tail in inputs()) {
        let mut s = state(r);
        for i in seq {
            s.step(i);
        }
        prop_assume!(s.is_terminal());
        let phase = s.phase();
        for i in tail {
            let out = s.step(i);
            prop_assert!(out.events.is_empty() && out.commands.is_empty());
            prop_assert_eq!(out.diagnostics.len(), 1);
            prop_assert_eq!(s.phase(), phase);
        }
    }

    #[test]
    fn replay_is_deterministic(r in regimen(), seq in inputs()) {
        let mut a = state(r);
        let mut b = state(r);
        for i in seq {
            prop_assert_eq!(a.step(i), b.step(i));
        }
        prop_assert_eq!(a, b);
    }

    #[test]
    fn no_set_starts_under_poor_air_gate(r in regimen(), pm25 in 35.1f64..500.0) {
        let mut s = state(r);
        s.step(air(0, pm25, 10.0));
        let out = s.step(cmd(0, ControllerCommand::Start));
        prop_assert!(!codes(&out).contains(&EventCode::SetStart));
        prop_assert_eq!(s.phase(), Phase::Idle);
    }
}
