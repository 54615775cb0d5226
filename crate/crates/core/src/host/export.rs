//! CSV export for clinicians.

use std::fmt::Write;

use crate::protocol::EventCode;
use crate::record::{RecordKind, SessionEventRecord};

pub const CSV_HEADER: &str = "t_ms,kind,spo2,rr,hr,rep_count,event,arg";

fn tenths(v: Option<u16>) -> String {
    v.map(|t| format!("{}.{}", t / 10, t % 10)).unwrap_or_default()
}

/// One row per Metric, Rep and Event record, in log order. Raw frames and
/// gap markers are left out.
pub fn to_csv(log: &[SessionEventRecord]) -> String {
    let mut out = String::with_capacity(64 * (log.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in log {
        let t = r.t_ms;
        // writing to a String cannot fail
        let _ = match &r.kind {
            RecordKind::Metric(m) => writeln!(
                out,
                "{t},metric,{},{},{},{},,",
                tenths(m.spo2_tenths),
                tenths(m.rr_tenths),
                tenths(m.hr_tenths),
                m.rep_count.map(|c| c.to_string()).unwrap_or_default()
            ),
            RecordKind::Rep { count } => writeln!(out, "{t},rep,,,,{count},,"),
            RecordKind::Event { code, arg } => {
                let name = EventCode::from_code(*code).map(|c| c.name().to_string()).unwrap_or_else(|| code.to_string());
                writeln!(out, "{t},event,,,,,{name},{arg}")
            }
            RecordKind::Raw { .. } | RecordKind::GapDetected { .. } => Ok(()),
        };
    }
    out
}

/// Number of records that produce a CSV row.
pub fn exported_record_count(log: &[SessionEventRecord]) -> usize {
    log.iter()
        .filter(|r| matches!(r.kind, RecordKind::Metric(_) | RecordKind::Rep { .. } | RecordKind::Event { .. }))
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{Quality, VitalKind, VitalsReading};
    use crate::record::MetricValues;

    #[test]
    fn empty_log_is_header_only() {
        assert_eq!(to_csv(&[]), format!("{CSV_HEADER}\n"));
    }

    #[test]
    fn single_spo2_reading_row() {
        let reading = VitalsReading { t_ms: 1000, kind: VitalKind::Spo2, value: 97.0, quality: Quality::Valid };
        let log = [SessionEventRecord {
            t_ms: 1000,
            recv_seq: 0,
            kind: RecordKind::Metric(MetricValues::from_reading(&reading)),
            payload: None,
        }];
        assert_eq!(to_csv(&log), format!("{CSV_HEADER}\n1000,metric,97.0,,,,,\n"));
    }

    #[test]
    fn rep_and_event_rows() {
        let log = [
            SessionEventRecord { t_ms: 5, recv_seq: 1, kind: RecordKind::Rep { count: 3 }, payload: None },
            SessionEventRecord { t_ms: 6, recv_seq: 2, kind: RecordKind::Event { code: 5, arg: 2 }, payload: None },
            SessionEventRecord { t_ms: 7, recv_seq: 3, kind: RecordKind::Raw { msg_type: 1 }, payload: None },
        ];
        assert_eq!(to_csv(&log), format!("{CSV_HEADER}\n5,rep,,,,3,,\n6,event,,,,,Warning,2\n"));
        assert_eq!(exported_record_count(&log), 2);
    }
}
