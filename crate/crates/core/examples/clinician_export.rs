//! Runs the adaptive scenario and prints the clinician report and the
//! first rows of the CSV export.

use pulmobell::cli::run_scenario;
use pulmobell::host::{ClinicianReport, SessionStore};
use pulmobell::sim::ScenarioScript;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/adaptive.json");
    let out_dir = std::env::temp_dir().join("pulmobell-export-example");
    let out = run_scenario(ScenarioScript::load(&path)?, &out_dir).map_err(|e| e.message)?;

    let store = SessionStore::open(&out.data_dir)?;
    let log = store.read_log(&out.session_id)?;
    let report = ClinicianReport::from_log(&out.session_id, &log)?;
    print!("{}", report.render_text());

    println!();
    for line in std::fs::read_to_string(&out.csv)?.lines().take(12) {
        println!("{line}");
    }
    Ok(())
}
