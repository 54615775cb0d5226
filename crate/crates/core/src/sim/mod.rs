//! Device simulator: synthetic sensors, scripted scenarios, and a device
//! loop that speaks the wire protocol.

mod device;
mod generator;
mod profile;
mod scenario;
mod transport;

pub use device::{
    run_device, AckRecord, ClockMode, DeviceOptions, DeviceRunReport, GroundTruth, MetricSample, RunOutcome,
    Simulator, SteeringLogEntry, SteeringSource, TargetPoint, ACCEL_BATCH, AIR_PERIOD_MS, METRICS_PERIOD_MS,
    PPG_BATCH, TICK_MS,
};
pub use generator::{
    gen_accel_trace, gen_ppg_trace, pulse_shape, AccelSynth, AccelTrace, PpgSynth, ACCEL_DT_MS, PPG_DT_MS,
};
pub use profile::{AirProfile, EffortProfile, PhysioProfile};
pub use scenario::{
    ScenarioField, ScenarioScript, SimParams, SteeringCommand, TimelineEntry, UserAction, UserCommand,
    DEFAULT_MAX_DURATION_S,
};
pub use transport::{duplex, PipeEnd, TcpTransport, Transport};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("scenario parse error at line {line}, column {column}: {message}")]
    Scenario { line: usize, column: usize, message: String },
    #[error("steering rejected: {0}")]
    Steering(String),
    #[error("transport: {0}")]
    Transport(String),
}
