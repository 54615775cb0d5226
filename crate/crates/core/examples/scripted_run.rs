//! Runs a scenario file end to end against an in-process host, the same
//! path as `pulmobell run`.
//!
//!     cargo run --example scripted_run -- crates/core/scenarios/desaturation.json

use std::path::PathBuf;

use pulmobell::cli::run_scenario;
use pulmobell::sim::ScenarioScript;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios/adaptive.json"));
    let script = ScenarioScript::load(&path)?;
    let out_dir = std::env::temp_dir().join(format!("pulmobell-run-{}", script.seed));
    let out = run_scenario(script, &out_dir).map_err(|e| e.message)?;
    for line in out.device.summary_lines() {
        println!("{line}");
    }
    for e in &out.device.events {
        println!("{:>7} ms  {:?} {}", e.t_ms, e.code, e.arg);
    }
    println!("outputs in {}", out_dir.display());
    Ok(())
}
