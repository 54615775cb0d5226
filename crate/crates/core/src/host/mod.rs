//! Host service: persists device sessions and serves them over HTTP,
//! WebSocket and a raw device port.

mod export;
mod http;
mod report;
mod server;
mod service;
mod store;

pub use export::{exported_record_count, to_csv, CSV_HEADER};
pub use http::{parse_command, router, CommandRequest, CommandResponse, CreatedSession};
pub use report::{Aggregate, ClinicianReport, MinuteAggregate, WarningEntry};
pub use server::{handle_device_stream, serve, ServeHandles};
pub use service::{
    ConnectionDiagnostics, DeviceConnection, Host, HostConfig, LiveItem, MetricPoint, SessionListing, SessionView,
    Subscription,
};
pub use store::{valid_id, FsyncPolicy, LogWriter, SessionRecord, SessionStatus, SessionStore};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum HostError {
    #[error("session {0} not found")]
    NotFound(String),
    #[error("invalid regimen: {0}")]
    Validation(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("storage: {0}")]
    Storage(String),
    #[error("rejected: {0}")]
    Rejected(String),
    #[error("no device connected: {0}")]
    DeviceUnavailable(String),
}
