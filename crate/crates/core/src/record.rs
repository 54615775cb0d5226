//! Persisted session log entries, one per decoded frame (plus gap markers).

use serde::{Deserialize, Serialize};

use crate::dsp::{VitalKind, VitalsReading};
use crate::protocol::{quality, DecodedFrame, EventCode, Message};

/// Vitals carried by one metrics frame. `None` marks a value that was not
/// valid when measured.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricValues {
    pub spo2_tenths: Option<u16>,
    pub rr_tenths: Option<u16>,
    pub hr_tenths: Option<u16>,
    pub rep_count: Option<u16>,
    pub quality_flags: u8,
}

pub fn to_tenths(v: f64) -> u16 {
    (v * 10.0).round().clamp(0.0, u16::MAX as f64) as u16
}

pub fn from_tenths(t: u16) -> f64 {
    t as f64 / 10.0
}

impl MetricValues {
    pub fn from_derived(spo2: u16, rr: u16, hr: u16, rep_count: u16, flags: u8) -> Self {
        let pick = |bit: u8, v: u16| (flags & bit != 0).then_some(v);
        Self {
            spo2_tenths: pick(quality::SPO2_VALID, spo2),
            rr_tenths: pick(quality::RR_VALID, rr),
            hr_tenths: pick(quality::HR_VALID, hr),
            rep_count: Some(rep_count),
            quality_flags: flags,
        }
    }

    /// A metric entry holding a single reading.
    pub fn from_reading(r: &VitalsReading) -> Self {
        let mut m = MetricValues::default();
        if r.is_valid() {
            let v = Some(to_tenths(r.value));
            match r.kind {
                VitalKind::Spo2 => {
                    m.spo2_tenths = v;
                    m.quality_flags |= quality::SPO2_VALID;
                }
                VitalKind::RespRate => {
                    m.rr_tenths = v;
                    m.quality_flags |= quality::RR_VALID;
                }
                VitalKind::HeartRate => {
                    m.hr_tenths = v;
                    m.quality_flags |= quality::HR_VALID;
                }
            }
        }
        m
    }

    pub fn spo2(&self) -> Option<f64> {
        self.spo2_tenths.map(from_tenths)
    }
    pub fn rr(&self) -> Option<f64> {
        self.rr_tenths.map(from_tenths)
    }
    pub fn hr(&self) -> Option<f64> {
        self.hr_tenths.map(from_tenths)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RecordKind {
    /// Raw batches, air samples, commands and acks, kept for audit.
    Raw { msg_type: u8 },
    Metric(MetricValues),
    /// `count` is the rep's position within its set.
    Rep { count: u16 },
    Event { code: u8, arg: u16 },
    GapDetected { missing: u16 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionEventRecord {
    pub t_ms: u32,
    pub recv_seq: u16,
    pub kind: RecordKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<Message>,
}

impl SessionEventRecord {
    pub fn is_metric(&self) -> bool {
        matches!(self.kind, RecordKind::Metric(_))
    }

    pub fn event_code(&self) -> Option<EventCode> {
        match self.kind {
            RecordKind::Event { code, .. } => EventCode::from_code(code),
            RecordKind::Rep { .. } => Some(EventCode::Rep),
            _ => None,
        }
    }

    /// Records for one decoded frame: a gap marker when frames went missing,
    /// then the frame itself. Frames without a timestamp take `last_t_ms`.
    pub fn from_frame(frame: &DecodedFrame, last_t_ms: u32) -> Vec<SessionEventRecord> {
        let t_ms = frame.message.t_ms().unwrap_or(last_t_ms);
        let mut out = Vec::with_capacity(2);
        if frame.missing_before > 0 {
            out.push(SessionEventRecord {
                t_ms,
                recv_seq: frame.seq,
                kind: RecordKind::GapDetected {
                    missing: frame.missing_before,
                },
                payload: None,
            });
        }
        let kind = match frame.message {
            Message::DerivedMetrics {
                spo2_tenths,
                rr_tenths,
                hr_tenths,
                rep_count,
                quality_flags,
                ..
            } => RecordKind::Metric(MetricValues::from_derived(
                spo2_tenths,
                rr_tenths,
                hr_tenths,
                rep_count,
                quality_flags,
            )),
            Message::SessionEvent { event_code, arg, .. } if event_code == EventCode::Rep.code() => {
                RecordKind::Rep { count: arg }
            }
            Message::SessionEvent { event_code, arg, .. } => RecordKind::Event {
                code: event_code,
                arg,
            },
            ref m => RecordKind::Raw {
                msg_type: m.msg_type(),
            },
        };
        out.push(SessionEventRecord {
            t_ms,
            recv_seq: frame.seq,
            kind,
            payload: Some(frame.message.clone()),
        });
        out
    }
}
