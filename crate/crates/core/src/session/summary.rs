use serde::{Deserialize, Serialize};

use super::SessionError;
use crate::protocol::EventCode;
use crate::record::{RecordKind, SessionEventRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Completed,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub total_reps: u32,
    pub per_set_reps: Vec<u32>,
    pub sets_completed: u32,
    pub min_spo2: Option<f64>,
    pub max_rr: Option<f64>,
    pub mean_hr: Option<f64>,
    pub warnings: u32,
    pub level_trajectory: Vec<u8>,
    pub duration_s: f64,
    /// `None` while the session is still running.
    pub outcome: Option<Outcome>,
}

/// Summarises a session log. The log must open with a `SessionStart` event.
pub fn summarize(log: &[SessionEventRecord]) -> Result<SessionSummary, SessionError> {
    let start = match log.first() {
        Some(r) if matches!(r.kind, RecordKind::Event { code, .. } if code == EventCode::SessionStart.code()) => r,
        _ => return Err(SessionError::Log("log does not begin with SessionStart".into())),
    };

    let mut s = SessionSummary {
        total_reps: 0,
        per_set_reps: Vec::new(),
        sets_completed: 0,
        min_spo2: None,
        max_rr: None,
        mean_hr: None,
        warnings: 0,
        level_trajectory: Vec::new(),
        duration_s: 0.0,
        outcome: None,
    };
    let mut hr_sum = 0.0;
    let mut hr_n = 0u32;
    let mut last_t = start.t_ms;

    for r in log {
        last_t = last_t.max(r.t_ms);
        match &r.kind {
            RecordKind::Metric(m) => {
                if let Some(v) = m.spo2() {
                    s.min_spo2 = Some(s.min_spo2.map_or(v, |x: f64| x.min(v)));
                }
                if let Some(v) = m.rr() {
                    s.max_rr = Some(s.max_rr.map_or(v, |x: f64| x.max(v)));
                }
                if let Some(v) = m.hr() {
                    hr_sum += v;
                    hr_n += 1;
                }
            }
            RecordKind::Rep { .. } => {
                s.total_reps += 1;
                match s.per_set_reps.last_mut() {
                    Some(n) => *n += 1,
                    None => s.per_set_reps.push(1),
                }
            }
            RecordKind::Event { code, arg } => match EventCode::from_code(*code) {
                Some(EventCode::SetStart) => {
                    s.per_set_reps.push(0);
                    if s.level_trajectory.is_empty() {
                        s.level_trajectory.push(*arg as u8);
                    }
                }
                Some(EventCode::LevelChange) => s.level_trajectory.push((*arg & 0xFF) as u8),
                Some(EventCode::SetEnd) => s.sets_completed += 1,
                Some(EventCode::Warning) => s.warnings += 1,
                Some(EventCode::Completed) => s.outcome = Some(Outcome::Completed),
                Some(EventCode::Aborted) => s.outcome = Some(Outcome::Aborted),
                _ => {}
            },
            RecordKind::Raw { .. } | RecordKind::GapDetected { .. } => {}
        }
    }
    if hr_n > 0 {
        s.mean_hr = Some(hr_sum / hr_n as f64);
    }
    s.duration_s = (last_t - start.t_ms) as f64 / 1000.0;
    Ok(s)
}
