//! The host: session registry, ingestion, live fan-out and device commands.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tokio::sync::{broadcast, oneshot};

use super::store::{FsyncPolicy, LogWriter, SessionRecord, SessionStatus, SessionStore};
use super::HostError;
use crate::protocol::{AckStatus, BindingToken, DecodedFrame, Decoder, DecoderStats, EventCode, FrameWriter, Message};
use crate::record::{RecordKind, SessionEventRecord};
use crate::session::{summarize, Regimen, SessionSummary};

#[derive(Debug, Clone)]
pub struct HostConfig {
    pub data_dir: PathBuf,
    pub fsync: FsyncPolicy,
    /// Seeds session ids and tokens; random when unset.
    pub id_seed: Option<u64>,
    /// Pins `created_at`; wall clock when unset.
    pub fixed_clock_ms: Option<u64>,
    /// Per-subscriber live queue length.
    pub live_capacity: usize,
    pub ack_timeout: Duration,
}

impl HostConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        Self {
            data_dir: data_dir.into(),
            fsync: FsyncPolicy::default(),
            id_seed: None,
            fixed_clock_ms: None,
            live_capacity: 1024,
            ack_timeout: Duration::from_secs(5),
        }
    }
}

/// One item of a live feed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LiveItem {
    Record(SessionEventRecord),
    /// The subscriber fell behind; the feed ends after this notice.
    Overflow { overflow: u64 },
}

/// A live feed of records appended after subscription, in append order.
pub struct Subscription {
    rx: broadcast::Receiver<SessionEventRecord>,
    done: bool,
}

impl Subscription {
    /// The next item, or `None` once the feed has ended.
    pub async fn recv(&mut self) -> Option<LiveItem> {
        if self.done {
            return None;
        }
        match self.rx.recv().await {
            Ok(r) => Some(LiveItem::Record(r)),
            Err(broadcast::error::RecvError::Lagged(n)) => {
                self.done = true;
                Some(LiveItem::Overflow { overflow: n })
            }
            Err(broadcast::error::RecvError::Closed) => {
                self.done = true;
                None
            }
        }
    }

    /// Non-blocking variant of [`recv`](Self::recv); `None` when nothing is queued.
    pub fn try_recv(&mut self) -> Option<LiveItem> {
        if self.done {
            return None;
        }
        match self.rx.try_recv() {
            Ok(r) => Some(LiveItem::Record(r)),
            Err(broadcast::error::TryRecvError::Lagged(n)) => {
                self.done = true;
                Some(LiveItem::Overflow { overflow: n })
            }
            Err(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConnectionDiagnostics {
    pub bytes_skipped: u64,
    pub crc_failures: u64,
    pub seq_gaps: u64,
    pub unknown_frames: u64,
    /// Frames that arrived after the session closed.
    pub dropped_after_close: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub id: String,
    pub created_at: u64,
    pub regimen: Regimen,
    pub status: SessionStatus,
    pub device_label: Option<String>,
    pub device_connected: bool,
    pub records: usize,
    /// `None` until the device has sent its `SessionStart`.
    pub summary: Option<SessionSummary>,
    pub diagnostics: ConnectionDiagnostics,
}

/// Listing entry; the binding token is only handed out at creation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionListing {
    pub id: String,
    pub created_at: u64,
    pub status: SessionStatus,
    pub device_label: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricPoint {
    pub t_ms: u32,
    pub spo2: Option<f64>,
    pub rr: Option<f64>,
    pub hr: Option<f64>,
    pub rep_count: Option<u16>,
    pub quality_flags: u8,
}

type Outbound = Box<dyn Fn(Vec<u8>) -> bool + Send + Sync>;

struct DeviceLink {
    conn: u64,
    out: Outbound,
    writer: FrameWriter,
    pending: HashMap<u16, oneshot::Sender<u8>>,
}

struct SlotState {
    record: SessionRecord,
    writer: Option<LogWriter>,
    device: Option<DeviceLink>,
    diagnostics: ConnectionDiagnostics,
}

struct Slot {
    state: Mutex<SlotState>,
    live: broadcast::Sender<SessionEventRecord>,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    // a panic while holding the lock cannot leave the log half-written in
    // memory, so carry on with the inner value
    m.lock().unwrap_or_else(|p| p.into_inner())
}

pub struct Host {
    store: SessionStore,
    config: HostConfig,
    slots: Mutex<HashMap<String, Arc<Slot>>>,
    tokens: Mutex<HashMap<BindingToken, String>>,
    rng: Mutex<ChaCha8Rng>,
    next_conn: AtomicU64,
}

impl Host {
    /// Opens (or creates) the data directory and repairs any torn log tails.
    pub fn open(config: HostConfig) -> Result<Arc<Self>, HostError> {
        let store = SessionStore::open(&config.data_dir)?;
        let mut tokens = HashMap::new();
        for rec in store.list()? {
            if rec.status == SessionStatus::Open {
                store.open_writer(&rec.id, FsyncPolicy::Always)?.sync()?;
            }
            tokens.insert(rec.token, rec.id);
        }
        let rng = match config.id_seed {
            Some(seed) => ChaCha8Rng::seed_from_u64(seed),
            None => ChaCha8Rng::from_os_rng(),
        };
        Ok(Arc::new(Self {
            store,
            config,
            slots: Mutex::new(HashMap::new()),
            tokens: Mutex::new(tokens),
            rng: Mutex::new(rng),
            next_conn: AtomicU64::new(1),
        }))
    }

    pub fn store(&self) -> &SessionStore {
        &self.store
    }

    pub fn config(&self) -> &HostConfig {
        &self.config
    }

    fn now_ms(&self) -> u64 {
        self.config.fixed_clock_ms.unwrap_or_else(|| {
            SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_millis() as u64)
                .unwrap_or(0)
        })
    }

    fn slot(&self, id: &str) -> Result<Arc<Slot>, HostError> {
        let mut slots = lock(&self.slots);
        if let Some(s) = slots.get(id) {
            return Ok(s.clone());
        }
        let record = self.store.load_record(id)?;
        let (live, _) = broadcast::channel(self.config.live_capacity.max(1));
        let slot = Arc::new(Slot {
            state: Mutex::new(SlotState {
                record,
                writer: None,
                device: None,
                diagnostics: ConnectionDiagnostics::default(),
            }),
            live,
        });
        slots.insert(id.to_string(), slot.clone());
        Ok(slot)
    }

    /// New Open session with an empty log.
    pub fn create_session(&self, regimen: Regimen) -> Result<SessionRecord, HostError> {
        regimen.validate().map_err(|e| HostError::Validation(e.to_string()))?;
        let (id, token) = {
            let mut rng = lock(&self.rng);
            loop {
                let mut id = [0u8; 8];
                let mut token = [0u8; 16];
                rng.fill_bytes(&mut id);
                rng.fill_bytes(&mut token);
                let id = hex::encode(id);
                if !self.store.exists(&id) {
                    break (id, BindingToken(token));
                }
            }
        };
        let record = SessionRecord {
            id: id.clone(),
            created_at: self.now_ms(),
            regimen,
            status: SessionStatus::Open,
            device_label: None,
            token,
        };
        self.store.create_log(&id)?;
        self.store.save_record(&record)?;
        lock(&self.tokens).insert(token, id);
        Ok(record)
    }

    pub fn list_sessions(&self) -> Result<Vec<SessionListing>, HostError> {
        Ok(self
            .store
            .list()?
            .into_iter()
            .map(|r| SessionListing {
                id: r.id,
                created_at: r.created_at,
                status: r.status,
                device_label: r.device_label,
            })
            .collect())
    }

    pub fn record(&self, id: &str) -> Result<SessionRecord, HostError> {
        let slot = self.slot(id)?;
        let st = lock(&slot.state);
        Ok(st.record.clone())
    }

    pub fn events(&self, id: &str) -> Result<Vec<SessionEventRecord>, HostError> {
        self.store.read_log(id)
    }

    /// Record, live status, and the summary of the persisted log.
    pub fn query_session(&self, id: &str) -> Result<SessionView, HostError> {
        let slot = self.slot(id)?;
        let (record, device_connected, diagnostics) = {
            let st = lock(&slot.state);
            (st.record.clone(), st.device.is_some(), st.diagnostics)
        };
        let log = self.store.read_log(id)?;
        let summary = if log.is_empty() {
            None
        } else {
            Some(summarize(&log).map_err(|e| HostError::Storage(e.to_string()))?)
        };
        Ok(SessionView {
            id: record.id,
            created_at: record.created_at,
            regimen: record.regimen,
            status: record.status,
            device_label: record.device_label,
            device_connected,
            records: log.len(),
            summary,
            diagnostics,
        })
    }

    /// Metric records with `from_ms <= t_ms < to_ms`, in time order.
    pub fn query_metrics(&self, id: &str, from_ms: Option<u64>, to_ms: Option<u64>) -> Result<Vec<MetricPoint>, HostError> {
        let from = from_ms.unwrap_or(0);
        let to = to_ms.unwrap_or(u64::MAX);
        if from > to {
            return Err(HostError::Parameter(format!("from {from} is after to {to}")));
        }
        let mut out: Vec<MetricPoint> = self
            .store
            .read_log(id)?
            .into_iter()
            .filter(|r| (from..to).contains(&(r.t_ms as u64)))
            .filter_map(|r| match r.kind {
                RecordKind::Metric(m) => Some(MetricPoint {
                    t_ms: r.t_ms,
                    spo2: m.spo2(),
                    rr: m.rr(),
                    hr: m.hr(),
                    rep_count: m.rep_count,
                    quality_flags: m.quality_flags,
                }),
                _ => None,
            })
            .collect();
        out.sort_by_key(|m| m.t_ms);
        Ok(out)
    }

    pub fn export_csv(&self, id: &str) -> Result<String, HostError> {
        Ok(super::export::to_csv(&self.store.read_log(id)?))
    }

    pub fn clinician_report(&self, id: &str) -> Result<super::ClinicianReport, HostError> {
        super::ClinicianReport::from_log(id, &self.store.read_log(id)?)
    }

    /// Subscribes to records appended from now on.
    pub fn subscribe(&self, id: &str) -> Result<Subscription, HostError> {
        let slot = self.slot(id)?;
        // taken under the append lock so no record falls between
        let _st = lock(&slot.state);
        Ok(Subscription {
            rx: slot.live.subscribe(),
            done: false,
        })
    }

    /// Binds a device stream to the session holding `token`. `out` carries
    /// bytes back to the device and returns false once the link is gone.
    pub fn connect_device(
        self: &Arc<Self>,
        token: BindingToken,
        label: &str,
        out: Outbound,
    ) -> Result<DeviceConnection, HostError> {
        let id = lock(&self.tokens)
            .get(&token)
            .cloned()
            .ok_or_else(|| HostError::Rejected("unknown binding token".into()))?;
        let slot = self.slot(&id)?;
        let conn = self.next_conn.fetch_add(1, Ordering::Relaxed);
        {
            let mut st = lock(&slot.state);
            if st.record.status == SessionStatus::Closed {
                return Err(HostError::Rejected(format!("session {id} is closed")));
            }
            if st.record.device_label.as_deref() != Some(label) {
                st.record.device_label = Some(label.to_string());
                self.store.save_record(&st.record)?;
            }
            st.diagnostics = ConnectionDiagnostics::default();
            st.device = Some(DeviceLink {
                conn,
                out,
                writer: FrameWriter::new(),
                pending: HashMap::new(),
            });
        }
        Ok(DeviceConnection {
            host: self.clone(),
            id,
            slot,
            conn,
            token_low16: token.low16(),
            decoder: Decoder::new(),
            bound: false,
            last_t_ms: 0,
        })
    }

    /// Sends a command frame to the session's device and waits for its Ack.
    pub async fn submit_command(&self, id: &str, code: u8, arg: u16) -> Result<AckStatus, HostError> {
        let slot = self.slot(id)?;
        let rx = {
            let mut st = lock(&slot.state);
            if st.record.status == SessionStatus::Closed {
                return Err(HostError::Rejected(format!("session {id} is closed")));
            }
            let Some(link) = st.device.as_mut() else {
                return Err(HostError::DeviceUnavailable(id.to_string()));
            };
            let (bytes, seq) = link
                .writer
                .encode(&Message::Command { command_code: code, arg })
                .map_err(|e| HostError::Parameter(e.to_string()))?;
            let (tx, rx) = oneshot::channel();
            link.pending.insert(seq, tx);
            if !(link.out)(bytes) {
                st.device = None;
                return Err(HostError::DeviceUnavailable(id.to_string()));
            }
            rx
        };
        match tokio::time::timeout(self.config.ack_timeout, rx).await {
            Ok(Ok(status)) => AckStatus::from_code(status)
                .ok_or_else(|| HostError::DeviceUnavailable(format!("device sent unknown ack status {status}"))),
            _ => Err(HostError::DeviceUnavailable(format!("no ack from device for session {id}"))),
        }
    }

    /// Marks a session Closed; its log accepts no more records.
    pub fn close_session(&self, id: &str) -> Result<(), HostError> {
        let slot = self.slot(id)?;
        let mut st = lock(&slot.state);
        self.close_locked(&mut st)
    }

    fn close_locked(&self, st: &mut SlotState) -> Result<(), HostError> {
        if st.record.status == SessionStatus::Closed {
            return Ok(());
        }
        if let Some(w) = st.writer.as_mut() {
            w.sync()?;
        }
        st.writer = None;
        st.record.status = SessionStatus::Closed;
        self.store.save_record(&st.record)
    }

    /// Forces every open log to stable storage.
    pub fn sync_all(&self) -> Result<(), HostError> {
        let slots: Vec<_> = lock(&self.slots).values().cloned().collect();
        for slot in slots {
            if let Some(w) = lock(&slot.state).writer.as_mut() {
                w.sync()?;
            }
        }
        Ok(())
    }
}

/// Per-connection ingestion state: the decoder and the session binding.
pub struct DeviceConnection {
    host: Arc<Host>,
    id: String,
    slot: Arc<Slot>,
    conn: u64,
    token_low16: u16,
    decoder: Decoder,
    bound: bool,
    last_t_ms: u32,
}

impl DeviceConnection {
    pub fn session_id(&self) -> &str {
        &self.id
    }

    pub fn stats(&self) -> DecoderStats {
        self.decoder.stats()
    }

    /// Decodes `bytes`, appends one record per frame (plus gap markers),
    /// then broadcasts them. Returns the number of records appended; they
    /// are in the log when this returns. An error means the connection
    /// must be dropped; records already appended stay.
    pub fn ingest(&mut self, bytes: &[u8]) -> Result<usize, HostError> {
        let frames = self.decoder.feed(bytes);
        self.apply(frames)
    }

    /// Ends the stream, ingesting any frame the decoder was still holding
    /// back behind an unfinished candidate.
    pub fn finish(&mut self) -> Result<usize, HostError> {
        let frames = self.decoder.finish();
        self.apply(frames)
    }

    fn apply(&mut self, frames: Vec<DecodedFrame>) -> Result<usize, HostError> {
        let mut records = Vec::with_capacity(frames.len() + 1);
        let mut acks = Vec::new();
        let mut rejected = None;
        for frame in &frames {
            if !self.bound {
                match frame.message {
                    Message::SessionEvent { event_code, arg, .. }
                        if event_code == EventCode::SessionStart.code() && arg == self.token_low16 =>
                    {
                        self.bound = true;
                    }
                    _ => {
                        rejected = Some(HostError::Rejected(
                            "first frame must be a SessionStart carrying the session token".into(),
                        ));
                        break;
                    }
                }
            }
            if let Message::Ack { acked_seq, status } = frame.message {
                acks.push((acked_seq, status));
            }
            records.extend(SessionEventRecord::from_frame(frame, self.last_t_ms));
            if let Some(t) = frame.message.t_ms() {
                self.last_t_ms = t;
            }
        }

        let stats = self.decoder.stats();
        let mut st = lock(&self.slot.state);
        st.diagnostics.bytes_skipped = stats.bytes_skipped;
        st.diagnostics.crc_failures = stats.crc_failures;
        st.diagnostics.seq_gaps = stats.seq_gaps;
        st.diagnostics.unknown_frames = stats.unknown_frames;
        if let Some(link) = st.device.as_mut().filter(|l| l.conn == self.conn) {
            for (seq, status) in acks {
                if let Some(tx) = link.pending.remove(&seq) {
                    let _ = tx.send(status);
                }
            }
        }
        if st.record.status == SessionStatus::Closed {
            st.diagnostics.dropped_after_close += frames.len() as u64;
            return rejected.map_or(Ok(0), Err);
        }
        // the log closes at the first terminal event
        let end = records
            .iter()
            .position(|r| {
                matches!(r.event_code(), Some(EventCode::Completed | EventCode::Aborted))
            })
            .map(|i| i + 1);
        if let Some(end) = end {
            let dropped = records.len() - end;
            st.diagnostics.dropped_after_close += dropped as u64;
            records.truncate(end);
        }
        if st.writer.is_none() && !records.is_empty() {
            st.writer = Some(self.host.store.open_writer(&self.id, self.host.config.fsync)?);
        }
        if let Some(w) = st.writer.as_mut() {
            w.append(&records)?;
        }
        for r in &records {
            // no subscribers is fine
            let _ = self.slot.live.send(r.clone());
        }
        if end.is_some() {
            self.host.close_locked(&mut st)?;
        }
        match rejected {
            Some(e) => Err(e),
            None => Ok(records.len()),
        }
    }
}

impl Drop for DeviceConnection {
    fn drop(&mut self) {
        let mut st = lock(&self.slot.state);
        if st.device.as_ref().is_some_and(|l| l.conn == self.conn) {
            st.device = None;
        }
        if let Some(w) = st.writer.as_mut() {
            let _ = w.sync();
        }
    }
}
