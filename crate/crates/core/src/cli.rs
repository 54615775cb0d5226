//! Command-line entry points. The `pulmobell` binary is a thin wrapper
//! around [`main`].

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use crate::host::{self, ClinicianReport, CreatedSession, FsyncPolicy, Host, HostConfig, HostError, SessionStore};
use crate::protocol::{BindingToken, TOKEN_LEN};
use crate::sim::{
    duplex, run_device, ClockMode, DeviceOptions, DeviceRunReport, RunOutcome, ScenarioScript, SimError,
    TcpTransport,
};

pub const EXIT_OK: i32 = 0;
/// Bad input or a failed run.
pub const EXIT_DOMAIN: i32 = 1;
/// The environment got in the way: ports, files, permissions.
pub const EXIT_ENV: i32 = 2;

pub const DATA_DIR_ENV: &str = "PULMOBELL_DATA_DIR";

#[derive(Debug, Parser)]
#[command(name = "pulmobell", version, about = "Simulated sensor dumbbell, session host and reports")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the host: HTTP/WebSocket API plus the device port.
    Serve(ServeArgs),
    /// Run a scenario as a device against a running host.
    Simulate(SimulateArgs),
    /// Run a scenario against an in-process host and write its outputs.
    Run(RunArgs),
    /// Print the report of a stored session.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = DATA_DIR_ENV)]
    pub data_dir: PathBuf,
    #[arg(long, default_value_t = 8080)]
    pub http_port: u16,
    #[arg(long, default_value_t = 9000)]
    pub device_port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub bind: std::net::IpAddr,
    /// always, per-batch or never
    #[arg(long, default_value = "per-batch")]
    pub fsync: FsyncPolicy,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    /// Host device port, host:port
    #[arg(long, default_value = "127.0.0.1:9000")]
    pub connect: String,
    /// Host HTTP base URL, used to create the session
    #[arg(long, default_value = "http://127.0.0.1:8080")]
    pub http: String,
    /// Bind to an existing session instead of creating one
    #[arg(long)]
    pub token: Option<BindingToken>,
    #[arg(long, default_value = "real")]
    pub clock: ClockMode,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    pub session_id: String,
    #[arg(long, env = DATA_DIR_ENV)]
    pub data_dir: PathBuf,
    /// Also write the CSV export here
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

/// An error with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn domain(m: impl std::fmt::Display) -> Self {
        Self { code: EXIT_DOMAIN, message: m.to_string() }
    }
    fn env(m: impl std::fmt::Display) -> Self {
        Self { code: EXIT_ENV, message: m.to_string() }
    }
}

impl From<HostError> for CliError {
    fn from(e: HostError) -> Self {
        match e {
            HostError::Storage(_) => CliError::env(e),
            _ => CliError::domain(e),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        CliError::domain(e)
    }
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_DOMAIN } else { EXIT_OK };
        }
    };
    init_tracing(matches!(cli.command, Command::Serve(_)));
    let mut stdout = std::io::stdout();
    match execute(cli.command, &mut stdout) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

fn init_tracing(verbose: bool) {
    let default = if verbose { "info" } else { "warn" };
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(default));
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .try_init();
}

pub fn execute(command: Command, out: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Serve(a) => serve(a, out),
        Command::Simulate(a) => simulate(a, out),
        Command::Run(a) => run(a, out).map(|_| ()),
        Command::Report(a) => report(a, out),
    }
}

fn say(out: &mut dyn Write, line: impl std::fmt::Display) {
    let _ = writeln!(out, "{line}");
    let _ = out.flush();
}

fn load_scenario(path: &Path, seed: Option<u64>) -> Result<ScenarioScript, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::domain(format!("{}: {e}", path.display())))?;
    let mut script = ScenarioScript::from_json(&text).map_err(|e| CliError::domain(format!("{}: {e}", path.display())))?;
    if let Some(s) = seed {
        script.seed = s;
    }
    Ok(script)
}

fn serve(a: ServeArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if a.http_port != 0 && a.http_port == a.device_port {
        return Err(CliError::domain("--http-port and --device-port must differ"));
    }
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(CliError::env)?;
    rt.block_on(async move {
        let mut config = HostConfig::new(&a.data_dir);
        config.fsync = a.fsync;
        let host = Host::open(config).map_err(CliError::env)?;
        let http = tokio::net::TcpListener::bind(SocketAddr::new(a.bind, a.http_port))
            .await
            .map_err(|e| CliError::env(format!("http port {}: {e}", a.http_port)))?;
        let device = tokio::net::TcpListener::bind(SocketAddr::new(a.bind, a.device_port))
            .await
            .map_err(|e| CliError::env(format!("device port {}: {e}", a.device_port)))?;
        let http_addr = http.local_addr().map_err(CliError::env)?;
        let device_addr = device.local_addr().map_err(CliError::env)?;
        say(out, format!("listening http={http_addr} device={device_addr}"));
        host::serve(host, http, device, shutdown_signal())
            .await
            .map_err(CliError::env)?;
        say(out, "stopped");
        Ok(())
    })
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {}
        _ = term => {}
    }
}

fn print_device_report(out: &mut dyn Write, report: &DeviceRunReport) {
    for line in report.summary_lines() {
        say(out, line);
    }
}

fn simulate(a: SimulateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let script = load_scenario(&a.scenario, a.seed)?;
    let token = match a.token {
        Some(t) => t,
        None => {
            let url = format!("{}/api/sessions", a.http.trim_end_matches('/'));
            let mut resp = ureq::post(&url)
                .send_json(script.regimen)
                .map_err(|e| CliError::domain(format!("transport: creating session at {url}: {e}")))?;
            let created: CreatedSession = resp
                .body_mut()
                .read_json()
                .map_err(|e| CliError::domain(format!("transport: bad reply from {url}: {e}")))?;
            say(out, format!("session {}", created.id));
            created.token
        }
    };
    let mut transport = TcpTransport::connect(a.connect.as_str(), Duration::from_secs(5))
        .map_err(|e| CliError::domain(format!("transport: connecting to {}: {e}", a.connect)))?;
    let report = run_device(
        script,
        &mut transport,
        DeviceOptions {
            clock: a.clock,
            token: Some(token),
            steering: None,
        },
    )?;
    print_device_report(out, &report);
    if report.outcome == RunOutcome::TransportError {
        return Err(CliError::domain(format!(
            "transport: {}",
            report.error.as_deref().unwrap_or("link failed")
        )));
    }
    Ok(())
}

/// Files written by [`run_scenario`].
#[derive(Debug, Clone)]
pub struct RunOutputs {
    pub session_id: String,
    pub data_dir: PathBuf,
    pub log: PathBuf,
    pub csv: PathBuf,
    pub report: PathBuf,
    pub device: DeviceRunReport,
}

pub const LOG_FILE: &str = "session.jsonl";
pub const CSV_FILE: &str = "export.csv";
pub const REPORT_FILE: &str = "report.txt";
pub const DEVICE_REPORT_FILE: &str = "device_report.json";

/// Runs `script` against an in-process host over a pipe with the
/// accelerated clock. The host keeps its data under `out_dir/data`; the
/// log, CSV export and text report are copied to `out_dir`.
pub fn run_scenario(script: ScenarioScript, out_dir: &Path) -> Result<RunOutputs, CliError> {
    script.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| CliError::env(format!("{}: {e}", out_dir.display())))?;
    let data_dir = out_dir.join("data");
    let mut config = HostConfig::new(&data_dir);
    config.id_seed = Some(script.seed);
    config.fixed_clock_ms = Some(0);
    config.fsync = FsyncPolicy::Never;
    let host = Host::open(config)?;
    let record = host.create_session(script.regimen)?;
    let id = record.id.clone();

    let (mut device_end, mut host_end) = duplex();
    let back = host_end.sender();
    let mut conn = host.connect_device(record.token, "pipe", Box::new(move |b| back.send(b).is_ok()))?;
    let device = std::thread::spawn(move || {
        run_device(
            script,
            &mut device_end,
            DeviceOptions {
                clock: ClockMode::Accelerated,
                token: Some(record.token),
                steering: None,
            },
        )
    });

    let mut pending = Vec::new();
    let mut bound = false;
    let mut ingest_error = None;
    while let Some(chunk) = host_end.recv() {
        if ingest_error.is_some() {
            continue;
        }
        let bytes = if bound {
            chunk
        } else {
            pending.extend_from_slice(&chunk);
            if pending.len() < TOKEN_LEN {
                continue;
            }
            bound = true;
            pending.split_off(TOKEN_LEN)
        };
        if let Err(e) = conn.ingest(&bytes) {
            ingest_error = Some(e);
        }
    }
    if ingest_error.is_none() {
        if let Err(e) = conn.finish() {
            ingest_error = Some(e);
        }
    }
    let stats = conn.stats();
    drop(conn);
    let device = device
        .join()
        .map_err(|_| CliError::domain("device thread panicked"))??;
    if let Some(e) = ingest_error {
        return Err(e.into());
    }
    if device.outcome == RunOutcome::TransportError {
        return Err(CliError::domain(format!("transport: {}", device.error.as_deref().unwrap_or("?"))));
    }
    if stats.crc_failures > 0 || stats.seq_gaps > 0 {
        return Err(CliError::domain(format!(
            "lossless link reported {} crc failures and {} seq gaps",
            stats.crc_failures, stats.seq_gaps
        )));
    }
    host.sync_all()?;

    let log_src = host.store().log_path(&id);
    let log = out_dir.join(LOG_FILE);
    let csv = out_dir.join(CSV_FILE);
    let report = out_dir.join(REPORT_FILE);
    let write = |path: &Path, body: &[u8]| fs::write(path, body).map_err(|e| CliError::env(format!("{}: {e}", path.display())));
    fs::copy(&log_src, &log).map_err(|e| CliError::env(format!("{}: {e}", log.display())))?;
    write(&csv, host.export_csv(&id)?.as_bytes())?;
    let text = match host.clinician_report(&id) {
        Ok(r) => r.render_text(),
        Err(e) => format!("session {id}\nno report: {e}\n"),
    };
    write(&report, format!("{text}device outcome {:?}\nground-truth reps {}\n", device.outcome, device.truth.total_reps()).as_bytes())?;
    let device_json = serde_json::to_vec_pretty(&device).map_err(CliError::env)?;
    write(&out_dir.join(DEVICE_REPORT_FILE), &device_json)?;
    Ok(RunOutputs {
        session_id: id,
        data_dir,
        log,
        csv,
        report,
        device,
    })
}

fn run(a: RunArgs, out: &mut dyn Write) -> Result<RunOutputs, CliError> {
    let script = load_scenario(&a.scenario, a.seed)?;
    let outputs = run_scenario(script, &a.out_dir)?;
    say(out, format!("session {}", outputs.session_id));
    print_device_report(out, &outputs.device);
    say(out, format!("wrote {}", outputs.log.display()));
    say(out, format!("wrote {}", outputs.csv.display()));
    say(out, format!("wrote {}", outputs.report.display()));
    Ok(outputs)
}

fn report(a: ReportArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if !a.data_dir.is_dir() {
        return Err(CliError::env(format!("data dir {} does not exist", a.data_dir.display())));
    }
    let store = SessionStore::open(&a.data_dir)?;
    let log = store.read_log(&a.session_id)?;
    let report = ClinicianReport::from_log(&a.session_id, &log)?;
    let _ = out.write_all(report.render_text().as_bytes());
    if let Some(path) = a.csv {
        fs::write(&path, host::to_csv(&log)).map_err(|e| CliError::env(format!("{}: {e}", path.display())))?;
        say(out, format!("wrote {}", path.display()));
    }
    Ok(())
}
