use std::net::SocketAddr;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use futures_util::{SinkExt, StreamExt};
use serde_json::{json, Value};
use tokio::sync::oneshot;

use pulmobell::host::{
    exported_record_count, serve, to_csv, CreatedSession, DeviceConnection, Host, HostConfig, HostError, LiveItem,
    SessionRecord, SessionStatus, CSV_HEADER,
};
use pulmobell::protocol::{encode_frame, AckStatus, BindingToken, CommandCode, Decoder, EventCode, Message};
use pulmobell::record::{to_tenths, RecordKind};
use pulmobell::session::{Outcome, Regimen};
use pulmobell::sim::{
    duplex, run_device, ClockMode, DeviceOptions, RunOutcome, ScenarioScript, TcpTransport,
};

fn config(dir: &Path) -> HostConfig {
    let mut c = HostConfig::new(dir);
    c.id_seed = Some(11);
    c.fixed_clock_ms = Some(1_700_000_000_000);
    c
}

fn open(dir: &Path) -> Arc<Host> {
    Host::open(config(dir)).unwrap()
}

fn frame(seq: u16, m: Message) -> Vec<u8> {
    encode_frame(&m, seq).unwrap()
}

fn event(t_ms: u32, code: EventCode, arg: u16) -> Message {
    Message::SessionEvent { t_ms, event_code: code.code(), arg }
}

fn metric(t_ms: u32, spo2: f64) -> Message {
    Message::DerivedMetrics {
        t_ms,
        spo2_tenths: to_tenths(spo2),
        rr_tenths: 150,
        hr_tenths: 780,
        rep_count: 0,
        quality_flags: 0b111,
    }
}

type Sent = Arc<Mutex<Vec<Vec<u8>>>>;

/// Binds a fake device and feeds it the SessionStart frame at seq 0.
fn bind(host: &Arc<Host>, rec: &SessionRecord) -> (DeviceConnection, Sent) {
    let sent: Sent = Arc::default();
    let s = sent.clone();
    let mut conn = host
        .connect_device(rec.token, "test", Box::new(move |b| {
            s.lock().unwrap().push(b);
            true
        }))
        .unwrap();
    assert_eq!(conn.ingest(&frame(0, event(0, EventCode::SessionStart, rec.token.low16()))).unwrap(), 1);
    (conn, sent)
}

fn scenario(name: &str) -> ScenarioScript {
    ScenarioScript::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)).unwrap()
}

/// The full device byte stream for a scenario, without the token prefix.
fn device_stream(script: ScenarioScript, token: BindingToken) -> Vec<u8> {
    let (mut host_end, mut dev) = duplex();
    run_device(script, &mut dev, DeviceOptions { token: Some(token), ..Default::default() }).unwrap();
    drop(dev);
    let mut out = Vec::new();
    while let Some(c) = host_end.recv() {
        out.extend(c);
    }
    out.split_off(16)
}

#[test]
fn sessions_are_created_listed_and_reloaded() {
    let dir = tempfile::tempdir().unwrap();
    let host = open(dir.path());
    let a = host.create_session(Regimen::default()).unwrap();
    let b = host.create_session(Regimen { sets: 1, ..Regimen::default() }).unwrap();
    assert_ne!(a.id, b.id);
    assert_ne!(a.token, b.token);
    assert_eq!(a.id.len(), 16);
    assert!(a.id.chars().all(|c| c.is_ascii_hexdigit() && !c.is_ascii_uppercase()));
    assert_eq!(a.status, SessionStatus::Open);
    assert!(matches!(
        host.create_session(Regimen { start_level: 6, ..Regimen::default() }),
        Err(HostError::Validation(_))
    ));
    assert_eq!(host.list_sessions().unwrap().len(), 2);
    let view = host.query_session(&a.id).unwrap();
    assert_eq!((view.records, view.summary.is_none(), view.device_connected), (0, true, false));
    assert!(matches!(host.query_session("0123456789abcdef"), Err(HostError::NotFound(_))));
    assert!(matches!(host.query_session("../etc"), Err(HostError::NotFound(_))));
    drop(host);

    let host = open(dir.path());
    let mut ids: Vec<_> = host.list_sessions().unwrap().into_iter().map(|s| s.id).collect();
    ids.sort();
    let mut want = vec![a.id.clone(), b.id.clone()];
    want.sort();
    assert_eq!(ids, want);
    assert_eq!(host.record(&b.id).unwrap().regimen.sets, 1);
    bind(&host, &a);
}

#[test]
fn seeded_hosts_issue_identical_ids() {
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let a = open(d1.path()).create_session(Regimen::default()).unwrap();
    let b = open(d2.path()).create_session(Regimen::default()).unwrap();
    assert_eq!((a.id, a.token), (b.id, b.token));
}

#[test]
fn metrics_frame_is_persisted_and_broadcast() {
    let dir = tempfile::tempdir().unwrap();
    let host = open(dir.path());
    let rec = host.create_session(Regimen::default()).unwrap();
    let (mut conn, _) = bind(&host, &rec);
    let mut sub = host.subscribe(&rec.id).unwrap();
    assert_eq!(conn.ingest(&frame(1, metric(1000, 96.4))).unwrap(), 1);

    let log = host.events(&rec.id).unwrap();
    assert_eq!(log.len(), 2);
    let RecordKind::Metric(m) = log[1].kind else { panic!("{:?}", log[1]) };
    assert_eq!(m.spo2(), Some(96.4));
    assert_eq!(log[1].t_ms, 1000);
    assert_eq!(log[1].recv_seq, 1);
    assert_eq!(sub.try_recv(), Some(LiveItem::Record(log[1].clone())));
    assert_eq!(sub.try_recv(), None);
}

#[test]
fn sequence_gap_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let host = open(dir.path());
    let rec = host.create_session(Regimen::default()).unwrap();
    let (mut conn, _) = bind(&host, &rec);
    let mut bytes = frame(1, metric(1000, 97.0));
    bytes.extend(frame(4, metric(2000, 97.0)));
    assert_eq!(conn.ingest(&bytes).unwrap(), 3);
    let log = host.events(&rec.id).unwrap();
    assert_eq!(log[2].kind, RecordKind::GapDetected { missing: 2 });
    assert_eq!(log[3].recv_seq, 4);
    assert_eq!(host.query_session(&rec.id).unwrap().diagnostics.seq_gaps, 1);
}

#[test]
fn corrupted_frame_is_counted_and_skipped() {
    let dir = tempfile::tempdir().unwrap();
    let host = open(dir.path());
    let rec = host.create_session(Regimen::default()).unwrap();
    let (mut conn, _) = bind(&host, &rec);
    let mut bad = frame(1, metric(1000, 97.0));
    bad[9] ^= 0x40;
    bad.extend(frame(2, metric(2000, 95.0)));
    conn.ingest(&bad[..10]).unwrap();
    conn.ingest(&bad[10..]).unwrap();
    assert_eq!(conn.stats().crc_failures, 1);
    let view = host.query_session(&rec.id).unwrap();
    assert_eq!(view.diagnostics.crc_failures, 1);
    let log = host.events(&rec.id).unwrap();
    assert!(matches!(log.last().unwrap().kind, RecordKind::Metric(m) if m.spo2() == Some(95.0)));
    assert!(log.iter().all(|r| r.t_ms != 1000));
}

#[test]
fn binding_is_checked() {
    let dir = tempfile::tempdir().unwrap();
    let host = open(dir.path());
    let rec = host.create_session(Regimen::default()).unwrap();
    let noop = || Box::new(|_: Vec<u8>| true);
    assert!(matches!(host.connect_device(BindingToken([9; 16]), "x", noop()), Err(HostError::Rejected(_))));

    let mut conn = host.connect_device(rec.token, "x", noop()).unwrap();
    assert!(matches!(conn.ingest(&frame(0, metric(0, 97.0))), Err(HostError::Rejected(_))));
    drop(conn);
    let mut conn = host.connect_device(rec.token, "x", noop()).unwrap();
    let wrong = frame(0, event(0, EventCode::SessionStart, rec.token.low16().wrapping_add(1)));
    assert!(matches!(conn.ingest(&wrong), Err(HostError::Rejected(_))));
    assert!(host.events(&rec.id).unwrap().is_empty());
}

#[test]
fn metrics_query_is_half_open() {
    let dir = tempfile::tempdir().unwrap();
    let host = open(dir.path());
    let rec = host.create_session(Regimen::default()).unwrap();
    let (mut conn, _) = bind(&host, &rec);
    for (i, t) in [1000, 2000, 3000].into_iter().enumerate() {
        conn.ingest(&frame(i as u16 + 1, metric(t, 96.0))).unwrap();
    }
    let ts = |from, to| -> Vec<u32> { host.query_metrics(&rec.id, from, to).unwrap().iter().map(|m| m.t_ms).collect() };
    assert_eq!(ts(None, None), vec![1000, 2000, 3000]);
    assert_eq!(ts(Some(1000), Some(3000)), vec![1000, 2000]);
    assert_eq!(ts(Some(2000), Some(2000)), Vec::<u32>::new());
    assert_eq!(ts(Some(2500), None), vec![3000]);
    assert!(matches!(host.query_metrics(&rec.id, Some(3000), Some(1000)), Err(HostError::Parameter(_))));
    assert!(matches!(host.query_metrics("00000000000000aa", None, None), Err(HostError::NotFound(_))));
}

#[test]
fn csv_export_rows() {
    let dir = tempfile::tempdir().unwrap();
    let host = open(dir.path());
    let rec = host.create_session(Regimen::default()).unwrap();
    let (mut conn, _) = bind(&host, &rec);
    let mut bytes = frame(1, event(0, EventCode::SetStart, 2));
    bytes.extend(frame(2, Message::AirQuality { t_ms: 0, pm25_tenths: 80, pm10_tenths: 200 }));
    bytes.extend(frame(3, metric(1000, 96.5)));
    bytes.extend(frame(4, event(4000, EventCode::Rep, 1)));
    bytes.extend(frame(5, Message::DerivedMetrics {
        t_ms: 5000,
        spo2_tenths: 0,
        rr_tenths: 0,
        hr_tenths: 812,
        rep_count: 1,
        quality_flags: 0b100,
    }));
    conn.ingest(&bytes).unwrap();
    let csv = host.export_csv(&rec.id).unwrap();
    let expected = format!(
        "{CSV_HEADER}\n\
         0,event,,,,,SessionStart,{}\n\
         0,event,,,,,SetStart,2\n\
         1000,metric,96.5,15.0,78.0,0,,\n\
         4000,rep,,,,1,,\n\
         5000,metric,,,81.2,1,,\n",
        rec.token.low16()
    );
    assert_eq!(csv, expected);
    let log = host.events(&rec.id).unwrap();
    assert_eq!(exported_record_count(&log), 5);
    assert_eq!(to_csv(&log), csv);
    assert_eq!(host.export_csv(&rec.id).unwrap(), csv);
}

#[test]
fn terminal_event_closes_session() {
    let dir = tempfile::tempdir().unwrap();
    let host = open(dir.path());
    let rec = host.create_session(Regimen::default()).unwrap();
    let (mut conn, _) = bind(&host, &rec);
    let mut bytes = frame(1, event(100, EventCode::Aborted, 0xFFFF));
    bytes.extend(frame(2, metric(1000, 96.0)));
    assert_eq!(conn.ingest(&bytes).unwrap(), 1);
    assert_eq!(conn.ingest(&frame(3, metric(2000, 96.0))).unwrap(), 0);
    let view = host.query_session(&rec.id).unwrap();
    assert_eq!(view.status, SessionStatus::Closed);
    assert_eq!(view.diagnostics.dropped_after_close, 2);
    assert_eq!(view.summary.unwrap().outcome, Some(Outcome::Aborted));
    drop(conn);
    assert!(matches!(host.connect_device(rec.token, "x", Box::new(|_| true)), Err(HostError::Rejected(_))));
    drop(host);
    assert_eq!(open(dir.path()).record(&rec.id).unwrap().status, SessionStatus::Closed);
}

#[test]
fn subscriber_overflow_ends_feed() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path());
    cfg.live_capacity = 4;
    let host = Host::open(cfg).unwrap();
    let rec = host.create_session(Regimen::default()).unwrap();
    let (mut conn, _) = bind(&host, &rec);
    let mut sub = host.subscribe(&rec.id).unwrap();
    for i in 1..=10u16 {
        conn.ingest(&frame(i, metric(i as u32 * 1000, 96.0))).unwrap();
    }
    assert_eq!(sub.try_recv(), Some(LiveItem::Overflow { overflow: 6 }));
    assert_eq!(sub.try_recv(), None);
    assert_eq!(serde_json::to_value(LiveItem::Overflow { overflow: 6 }).unwrap(), json!({ "overflow": 6 }));
    // the log is unaffected
    assert_eq!(host.events(&rec.id).unwrap().len(), 11);
}

#[test]
fn torn_log_tail_is_repaired() {
    let dir = tempfile::tempdir().unwrap();
    let host = open(dir.path());
    let rec = host.create_session(Regimen::default()).unwrap();
    let (mut conn, _) = bind(&host, &rec);
    conn.ingest(&frame(1, metric(1000, 96.0))).unwrap();
    drop(conn);
    drop(host);
    let log_path = dir.path().join(format!("{}.jsonl", rec.id));
    let log_path = if log_path.exists() {
        log_path
    } else {
        open(dir.path()).store().log_path(&rec.id)
    };
    let mut text = std::fs::read(&log_path).unwrap();
    text.extend_from_slice(b"{\"t_ms\":2000,\"recv_s");
    std::fs::write(&log_path, &text).unwrap();

    let host = open(dir.path());
    assert_eq!(host.events(&rec.id).unwrap().len(), 2);
    let mut conn = host.connect_device(rec.token, "again", Box::new(|_| true)).unwrap();
    conn.ingest(&frame(0, event(0, EventCode::SessionStart, rec.token.low16()))).unwrap();
    conn.ingest(&frame(1, metric(3000, 95.0))).unwrap();
    let log = host.events(&rec.id).unwrap();
    assert_eq!(log.len(), 4);
    assert_eq!(log[3].t_ms, 3000);
    let raw = std::fs::read_to_string(&log_path).unwrap();
    assert!(raw.lines().all(|l| serde_json::from_str::<Value>(l).is_ok()));
}

#[tokio::test]
async fn commands_need_a_device_and_an_ack() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path());
    cfg.ack_timeout = Duration::from_millis(200);
    let host = Host::open(cfg).unwrap();
    let rec = host.create_session(Regimen::default()).unwrap();
    assert!(matches!(
        host.submit_command(&rec.id, CommandCode::Pause.code(), 0).await,
        Err(HostError::DeviceUnavailable(_))
    ));

    let (tx, mut rx) = tokio::sync::mpsc::unbounded_channel();
    let mut conn = host.connect_device(rec.token, "t", Box::new(move |b| tx.send(b).is_ok())).unwrap();
    conn.ingest(&frame(0, event(0, EventCode::SessionStart, rec.token.low16()))).unwrap();

    let h = host.clone();
    let id = rec.id.clone();
    let pending = tokio::spawn(async move { h.submit_command(&id, CommandCode::Pause.code(), 0).await });
    let sent = rx.recv().await.unwrap();
    let cmd = Decoder::new().feed(&sent).remove(0);
    assert_eq!(cmd.message, Message::Command { command_code: CommandCode::Pause.code(), arg: 0 });
    conn.ingest(&frame(1, Message::Ack { acked_seq: cmd.seq, status: AckStatus::Ok.code() })).unwrap();
    assert_eq!(pending.await.unwrap(), Ok(AckStatus::Ok));

    // no ack within the timeout
    assert!(matches!(
        host.submit_command(&rec.id, CommandCode::Resume.code(), 0).await,
        Err(HostError::DeviceUnavailable(_))
    ));
    drop(conn);
    assert!(matches!(
        host.submit_command(&rec.id, CommandCode::Resume.code(), 0).await,
        Err(HostError::DeviceUnavailable(_))
    ));
}

#[test]
fn simulated_session_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let host = open(dir.path());
    let rec = host.create_session(Regimen::default()).unwrap();
    let stream = device_stream(scenario("clean_3x10.json"), rec.token);
    let mut conn = host.connect_device(rec.token, "pipe", Box::new(|_| true)).unwrap();
    for chunk in stream.chunks(777) {
        conn.ingest(chunk).unwrap();
    }
    let view = host.query_session(&rec.id).unwrap();
    assert_eq!(view.status, SessionStatus::Closed);
    let summary = view.summary.unwrap();
    assert_eq!(summary.total_reps, 30);
    assert_eq!(summary.per_set_reps, vec![10, 10, 10]);
    assert_eq!(summary.outcome, Some(Outcome::Completed));
    assert_eq!(view.diagnostics.crc_failures + view.diagnostics.seq_gaps, 0);

    let report = host.clinician_report(&rec.id).unwrap();
    assert!(!report.per_minute.is_empty());
    let spo2 = report.per_minute[0].spo2.unwrap();
    assert!(spo2.min <= spo2.mean && spo2.mean <= spo2.max);
    assert!((spo2.mean - 97.0).abs() < 1.0);
    let text = report.render_text();
    assert!(text.contains(&rec.id));

    let csv = host.export_csv(&rec.id).unwrap();
    let log = host.events(&rec.id).unwrap();
    assert_eq!(csv.lines().count(), exported_record_count(&log) + 1);
    assert_eq!(csv.lines().filter(|l| l.contains(",rep,")).count(), 30);
}

/// A host serving on ephemeral ports from its own runtime thread.
struct Server {
    http: SocketAddr,
    device: SocketAddr,
    stop: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl Server {
    fn start(dir: &Path) -> Self {
        let cfg = config(dir);
        let (addr_tx, addr_rx) = std::sync::mpsc::channel();
        let (stop, stopped) = oneshot::channel::<()>();
        let thread = std::thread::spawn(move || {
            let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().unwrap();
            rt.block_on(async move {
                let host = Host::open(cfg).unwrap();
                let http = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
                let device = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
                addr_tx.send((http.local_addr().unwrap(), device.local_addr().unwrap())).unwrap();
                serve(host, http, device, async {
                    let _ = stopped.await;
                })
                .await
                .unwrap();
            });
        });
        let (http, device) = addr_rx.recv().unwrap();
        Self { http, device, stop: Some(stop), thread: Some(thread) }
    }

    fn url(&self, path: &str) -> String {
        format!("http://{}{path}", self.http)
    }

    fn create(&self, regimen: Value) -> CreatedSession {
        let mut resp = ureq::post(&self.url("/api/sessions")).send_json(regimen).unwrap();
        assert_eq!(resp.status(), 201);
        resp.body_mut().read_json().unwrap()
    }

    fn get_json(&self, path: &str) -> Value {
        ureq::get(&self.url(path)).call().unwrap().body_mut().read_json().unwrap()
    }

    fn run_device(&self, script: ScenarioScript, token: BindingToken, clock: ClockMode) -> std::thread::JoinHandle<RunOutcome> {
        let addr = self.device;
        std::thread::spawn(move || {
            let mut t = TcpTransport::connect(addr, Duration::from_secs(2)).unwrap();
            run_device(script, &mut t, DeviceOptions { clock, token: Some(token), ..Default::default() })
                .unwrap()
                .outcome
        })
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        if let Some(s) = self.stop.take() {
            let _ = s.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

fn status_of(r: Result<ureq::http::Response<ureq::Body>, ureq::Error>) -> u16 {
    match r {
        Ok(resp) => resp.status().as_u16(),
        Err(ureq::Error::StatusCode(c)) => c,
        Err(e) => panic!("{e}"),
    }
}

/// Polls until the session's log is closed.
fn wait_closed(server: &Server, id: &str) -> Value {
    for _ in 0..200 {
        let v = server.get_json(&format!("/api/sessions/{id}"));
        if v["status"] == "Closed" || v["status"] == "closed" {
            return v;
        }
        std::thread::sleep(Duration::from_millis(25));
    }
    panic!("session {id} never closed");
}

#[test]
fn http_api_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let server = Server::start(dir.path());
    let created = server.create(json!({ "sets": 3, "rest_s": 90, "start_level": 2, "max_level": 2 }));
    assert_eq!(created.id.len(), 16);

    let list = server.get_json("/api/sessions");
    assert_eq!(list.as_array().unwrap().len(), 1);
    assert_eq!(list[0]["id"], created.id.as_str());

    let bad = ureq::post(&server.url("/api/sessions")).send_json(json!({ "sets": 0 }));
    assert_eq!(status_of(bad), 400);
    assert_eq!(status_of(ureq::get(&server.url("/api/sessions/00000000000000ff")).call()), 404);
    let inverted = ureq::get(&server.url(&format!("/api/sessions/{}/metrics?from=5&to=1", created.id))).call();
    assert_eq!(status_of(inverted), 400);
    let cmd = |body: Value| ureq::post(&server.url(&format!("/api/sessions/{}/command", created.id))).send_json(body);
    assert_eq!(status_of(cmd(json!({ "command": "pause" }))), 503);
    assert_eq!(status_of(cmd(json!({ "command": "juggle" }))), 400);
    assert_eq!(status_of(cmd(json!({ "command": "set_intensity", "arg": 7 }))), 400);

    let outcome = server.run_device(scenario("clean_3x10.json"), created.token, ClockMode::Accelerated);
    assert_eq!(outcome.join().unwrap(), RunOutcome::Completed);
    let view = wait_closed(&server, &created.id);
    assert_eq!(view["summary"]["total_reps"], 30);
    assert_eq!(view["diagnostics"]["crc_failures"], 0);
    assert_eq!(view["diagnostics"]["seq_gaps"], 0);

    let metrics = server.get_json(&format!("/api/sessions/{}/metrics?from=10000&to=20000", created.id));
    let ts: Vec<u64> = metrics.as_array().unwrap().iter().map(|m| m["t_ms"].as_u64().unwrap()).collect();
    assert_eq!(ts, (10..20).map(|s| s * 1000).collect::<Vec<_>>());

    let events = server.get_json(&format!("/api/sessions/{}/events", created.id));
    assert!(events.as_array().unwrap().len() > 100);

    let mut resp = ureq::get(&server.url(&format!("/api/sessions/{}/export.csv", created.id))).call().unwrap();
    assert!(resp.headers().get("content-type").unwrap().to_str().unwrap().starts_with("text/csv"));
    let csv = resp.body_mut().read_to_string().unwrap();
    assert!(csv.starts_with(CSV_HEADER));
    assert_eq!(csv.lines().filter(|l| l.contains(",rep,")).count(), 30);

    let report = server.get_json(&format!("/api/sessions/{}/report", created.id));
    assert_eq!(report["summary"]["sets_completed"], 3);

    // a closed session refuses its device
    let late = server.run_device(scenario("clean_3x10.json"), created.token, ClockMode::Accelerated);
    let _ = late.join();
    assert_eq!(server.get_json(&format!("/api/sessions/{}", created.id))["summary"]["total_reps"], 30);
}

#[test]
fn live_feed_and_ws_commands() {
    let dir = tempfile::tempdir().unwrap();
    let server = Server::start(dir.path());
    let created = server.create(json!({}));
    let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap();
    rt.block_on(async {
        let bad = tokio_tungstenite::connect_async(format!("ws://{}/api/live/00000000000000ff", server.http)).await;
        assert!(bad.is_err());

        let (mut ws, _) = tokio_tungstenite::connect_async(format!("ws://{}/api/live/{}", server.http, created.id))
            .await
            .unwrap();
        let mut script = scenario("clean_3x10.json");
        script.max_duration_s = 60.0;
        let device = server.run_device(script, created.token, ClockMode::Real);

        let mut next = async || -> Value {
            loop {
                let msg = tokio::time::timeout(Duration::from_secs(10), ws.next()).await.unwrap().unwrap().unwrap();
                if let tokio_tungstenite::tungstenite::Message::Text(t) = msg {
                    return serde_json::from_str(&t).unwrap();
                }
            }
        };
        let is_event = |v: &Value, code: EventCode| v["kind"]["type"] == "event" && v["kind"]["code"] == code.code();

        let first = next().await;
        assert!(is_event(&first, EventCode::SessionStart), "{first}");
        loop {
            if is_event(&next().await, EventCode::SetStart) {
                break;
            }
        }

        ws.send(json!({ "command": "pause" }).to_string().into()).await.unwrap();
        let mut acked = false;
        let mut paused = false;
        let mut last_t = 0;
        while !(acked && paused) {
            let msg = tokio::time::timeout(Duration::from_secs(10), ws.next()).await.unwrap().unwrap().unwrap();
            let tokio_tungstenite::tungstenite::Message::Text(t) = msg else { continue };
            let v: Value = serde_json::from_str(&t).unwrap();
            if let Some(ack) = v.get("ack") {
                assert_eq!(ack["ok"], true, "{v}");
                acked = true;
            } else {
                let t = v["t_ms"].as_u64().unwrap();
                assert!(t >= last_t, "records out of order");
                last_t = t;
                paused |= is_event(&v, EventCode::Paused);
            }
        }

        ws.send(json!({ "command": "set_intensity", "arg": 9 }).to_string().into()).await.unwrap();
        ws.send(json!({ "command": "stop" }).to_string().into()).await.unwrap();
        let mut saw_error = false;
        let mut aborted = false;
        while !aborted {
            let msg = tokio::time::timeout(Duration::from_secs(10), ws.next()).await.unwrap().unwrap().unwrap();
            let tokio_tungstenite::tungstenite::Message::Text(t) = msg else { continue };
            let v: Value = serde_json::from_str(&t).unwrap();
            saw_error |= v.get("error").is_some();
            aborted |= is_event(&v, EventCode::Aborted);
        }
        assert!(saw_error);
        let outcome = tokio::task::spawn_blocking(move || device.join().unwrap()).await.unwrap();
        assert_eq!(outcome, RunOutcome::Aborted);
    });
    let view = wait_closed(&server, &created.id);
    assert_eq!(view["summary"]["outcome"], "Aborted");
}
