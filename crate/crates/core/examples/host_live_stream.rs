//! Streams a simulated device into an in-process host and follows the
//! session through a live subscription, steering SpO2 down mid-run.

use std::sync::mpsc;

use pulmobell::host::{Host, HostConfig, LiveItem};
use pulmobell::protocol::TOKEN_LEN;
use pulmobell::record::RecordKind;
use pulmobell::sim::{duplex, run_device, DeviceOptions, ScenarioField, ScenarioScript, SteeringCommand};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("pulmobell-live-example");
    let _ = std::fs::remove_dir_all(&dir);
    let host = Host::open(HostConfig::new(&dir))?;

    let mut script = ScenarioScript::new(3);
    script.max_duration_s = 40.0;
    let session = host.create_session(script.regimen)?;
    let mut live = host.subscribe(&session.id)?;

    let (steer_tx, steer_rx) = mpsc::channel();
    steer_tx.send(SteeringCommand::new(ScenarioField::Spo2Target, 91.0))?;
    let (mut device_end, mut host_end) = duplex();
    let token = session.token;
    let device = std::thread::spawn(move || {
        let options = DeviceOptions { token: Some(token), steering: Some(steer_rx), ..Default::default() };
        run_device(script, &mut device_end, options)
    });

    let mut conn = host.connect_device(session.token, "example", Box::new(|_| true))?;
    let mut first = true;
    while let Some(mut chunk) = host_end.recv() {
        if first {
            chunk.drain(..TOKEN_LEN);
            first = false;
        }
        conn.ingest(&chunk)?;
        while let Some(item) = live.try_recv() {
            match item {
                LiveItem::Record(r) => match r.kind {
                    RecordKind::Metric(m) if r.t_ms % 5000 == 0 => {
                        println!("{:>6} ms  spo2 {:?} rr {:?} hr {:?}", r.t_ms, m.spo2(), m.rr(), m.hr())
                    }
                    RecordKind::Rep { count } => println!("{:>6} ms  rep {count}", r.t_ms),
                    RecordKind::Event { code, arg } => println!("{:>6} ms  event {code} arg {arg}", r.t_ms),
                    _ => {}
                },
                LiveItem::Overflow { overflow } => println!("fell behind by {overflow}"),
            }
        }
    }
    conn.finish()?;
    let report = device.join().expect("device thread")?;
    println!("device outcome {:?}", report.outcome);
    println!("{:?}", host.query_session(&session.id)?.summary);
    Ok(())
}
