//! Clinician report: the session summary plus per-minute vitals.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::HostError;
use crate::protocol::{EventCode, WarningCode};
use crate::record::{RecordKind, SessionEventRecord};
use crate::session::{summarize, SessionSummary};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
    pub n: u32,
}

#[derive(Debug, Default)]
struct Acc {
    min: f64,
    max: f64,
    sum: f64,
    n: u32,
}

impl Acc {
    fn add(&mut self, v: f64) {
        if self.n == 0 {
            self.min = v;
            self.max = v;
        } else {
            self.min = self.min.min(v);
            self.max = self.max.max(v);
        }
        self.sum += v;
        self.n += 1;
    }

    fn finish(&self) -> Option<Aggregate> {
        (self.n > 0).then(|| Aggregate {
            min: self.min,
            mean: self.sum / self.n as f64,
            max: self.max,
            n: self.n,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinuteAggregate {
    pub minute: u32,
    pub spo2: Option<Aggregate>,
    pub rr: Option<Aggregate>,
    pub hr: Option<Aggregate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarningEntry {
    pub t_ms: u32,
    pub warning: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClinicianReport {
    pub session_id: String,
    pub summary: SessionSummary,
    pub per_minute: Vec<MinuteAggregate>,
    pub warnings: Vec<WarningEntry>,
}

impl ClinicianReport {
    /// Everything here is recomputed from the log.
    pub fn from_log(session_id: &str, log: &[SessionEventRecord]) -> Result<Self, HostError> {
        let summary = summarize(log).map_err(|e| HostError::Parameter(e.to_string()))?;
        let mut minutes: Vec<(u32, [Acc; 3])> = Vec::new();
        let mut warnings = Vec::new();
        for r in log {
            match &r.kind {
                RecordKind::Metric(m) => {
                    let minute = r.t_ms / 60_000;
                    let idx = match minutes.iter().position(|(k, _)| *k == minute) {
                        Some(i) => i,
                        None => {
                            minutes.push((minute, Default::default()));
                            minutes.len() - 1
                        }
                    };
                    let accs = &mut minutes[idx].1;
                    for (i, v) in [m.spo2(), m.rr(), m.hr()].into_iter().enumerate() {
                        if let Some(v) = v {
                            accs[i].add(v);
                        }
                    }
                }
                RecordKind::Event { code, arg } if *code == EventCode::Warning.code() => {
                    let name = u8::try_from(*arg)
                        .ok()
                        .and_then(WarningCode::from_code)
                        .map(|w| w.name().to_string())
                        .unwrap_or_else(|| format!("code {arg}"));
                    warnings.push(WarningEntry { t_ms: r.t_ms, warning: name });
                }
                _ => {}
            }
        }
        minutes.sort_by_key(|(k, _)| *k);
        Ok(Self {
            session_id: session_id.to_string(),
            summary,
            per_minute: minutes
                .into_iter()
                .map(|(minute, a)| MinuteAggregate {
                    minute,
                    spo2: a[0].finish(),
                    rr: a[1].finish(),
                    hr: a[2].finish(),
                })
                .collect(),
            warnings,
        })
    }

    pub fn render_text(&self) -> String {
        let s = &self.summary;
        let opt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.1}"));
        let mut out = String::new();
        let _ = writeln!(out, "session {}", self.session_id);
        let _ = writeln!(
            out,
            "outcome {}",
            s.outcome.map_or("in progress".to_string(), |o| format!("{o:?}"))
        );
        let _ = writeln!(out, "total reps {}", s.total_reps);
        let per_set: Vec<String> = s.per_set_reps.iter().map(|r| r.to_string()).collect();
        let _ = writeln!(out, "reps per set {}", per_set.join(" "));
        let _ = writeln!(out, "sets completed {}", s.sets_completed);
        let _ = writeln!(out, "min spo2 {}", opt(s.min_spo2));
        let _ = writeln!(out, "max rr {}", opt(s.max_rr));
        let _ = writeln!(out, "mean hr {}", opt(s.mean_hr));
        let levels: Vec<String> = s.level_trajectory.iter().map(|l| l.to_string()).collect();
        let _ = writeln!(out, "levels {}", levels.join(" "));
        let _ = writeln!(out, "duration {:.1} s", s.duration_s);
        let _ = writeln!(out, "warnings {}", s.warnings);
        for w in &self.warnings {
            let _ = writeln!(out, "  {:>9.1} s  {}", w.t_ms as f64 / 1000.0, w.warning);
        }
        let _ = writeln!(out, "per minute (min/mean/max)");
        let _ = writeln!(out, "  min      spo2               rr                 hr");
        let cell = |a: Option<Aggregate>| {
            a.map_or("-".to_string(), |a| format!("{:.1}/{:.1}/{:.1}", a.min, a.mean, a.max))
        };
        for m in &self.per_minute {
            let _ = writeln!(out, "  {:<8} {:<18} {:<18} {}", m.minute, cell(m.spo2), cell(m.rr), cell(m.hr));
        }
        out
    }
}
