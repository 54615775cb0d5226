//! On-disk session storage: `<id>.json` holds the record, `<id>.jsonl`
//! the append-only event log, one record per line.

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HostError;
use crate::protocol::BindingToken;
use crate::record::SessionEventRecord;
use crate::session::Regimen;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Open,
    Closed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub id: String,
    /// Unix time in milliseconds.
    pub created_at: u64,
    pub regimen: Regimen,
    pub status: SessionStatus,
    pub device_label: Option<String>,
    pub token: BindingToken,
}

/// When appended records are forced to stable storage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FsyncPolicy {
    /// After every record.
    Always,
    /// Once per ingested chunk.
    #[default]
    PerBatch,
    /// Leave it to the OS; records still reach the kernel before ingest returns.
    Never,
}

impl std::str::FromStr for FsyncPolicy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "always" => Ok(Self::Always),
            "per-batch" | "per_batch" => Ok(Self::PerBatch),
            "never" => Ok(Self::Never),
            _ => Err(format!("unknown fsync policy {s:?}")),
        }
    }
}

fn storage(path: &Path, e: impl std::fmt::Display) -> HostError {
    HostError::Storage(format!("{}: {e}", path.display()))
}

#[derive(Debug, Clone)]
pub struct SessionStore {
    dir: PathBuf,
}

impl SessionStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, HostError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| storage(&dir, e))?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn meta_path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.json"))
    }

    pub fn log_path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.jsonl"))
    }

    pub fn exists(&self, id: &str) -> bool {
        valid_id(id) && self.meta_path(id).is_file()
    }

    /// Writes the record atomically (temp file + rename).
    pub fn save_record(&self, rec: &SessionRecord) -> Result<(), HostError> {
        let path = self.meta_path(&rec.id);
        let tmp = self.dir.join(format!(".{}.json.tmp", rec.id));
        let body = serde_json::to_vec_pretty(rec).map_err(|e| storage(&path, e))?;
        let mut f = File::create(&tmp).map_err(|e| storage(&tmp, e))?;
        f.write_all(&body).and_then(|_| f.sync_all()).map_err(|e| storage(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| storage(&path, e))
    }

    pub fn load_record(&self, id: &str) -> Result<SessionRecord, HostError> {
        if !self.exists(id) {
            return Err(HostError::NotFound(id.to_string()));
        }
        let path = self.meta_path(id);
        let text = fs::read_to_string(&path).map_err(|e| storage(&path, e))?;
        serde_json::from_str(&text).map_err(|e| storage(&path, e))
    }

    /// Every stored record, ordered by creation time then id.
    pub fn list(&self) -> Result<Vec<SessionRecord>, HostError> {
        let mut out = Vec::new();
        for entry in fs::read_dir(&self.dir).map_err(|e| storage(&self.dir, e))? {
            let path = entry.map_err(|e| storage(&self.dir, e))?.path();
            let Some(id) = path
                .file_name()
                .and_then(|n| n.to_str())
                .and_then(|n| n.strip_suffix(".json"))
            else {
                continue;
            };
            if valid_id(id) {
                out.push(self.load_record(id)?);
            }
        }
        out.sort_by(|a, b| (a.created_at, &a.id).cmp(&(b.created_at, &b.id)));
        Ok(out)
    }

    pub fn create_log(&self, id: &str) -> Result<(), HostError> {
        let path = self.log_path(id);
        OpenOptions::new()
            .create_new(true)
            .write(true)
            .open(&path)
            .map(|_| ())
            .map_err(|e| storage(&path, e))
    }

    /// Opens the log for appending, first cutting off a torn final line
    /// left by a crash mid-write.
    pub fn open_writer(&self, id: &str, policy: FsyncPolicy) -> Result<LogWriter, HostError> {
        let path = self.log_path(id);
        let mut file = OpenOptions::new()
            .read(true)
            .write(true)
            .create(true)
            .truncate(false)
            .open(&path)
            .map_err(|e| storage(&path, e))?;
        let keep = complete_prefix_len(&mut file).map_err(|e| storage(&path, e))?;
        file.set_len(keep).map_err(|e| storage(&path, e))?;
        file.seek(SeekFrom::End(0)).map_err(|e| storage(&path, e))?;
        Ok(LogWriter { file, path, policy })
    }

    /// Reads the log. A torn final line is ignored; a malformed line
    /// elsewhere is a storage error.
    pub fn read_log(&self, id: &str) -> Result<Vec<SessionEventRecord>, HostError> {
        if !self.exists(id) {
            return Err(HostError::NotFound(id.to_string()));
        }
        let path = self.log_path(id);
        let file = match File::open(&path) {
            Ok(f) => f,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(storage(&path, e)),
        };
        let mut reader = BufReader::new(file);
        let mut out = Vec::new();
        let mut line = String::new();
        let mut n = 0usize;
        loop {
            line.clear();
            let read = reader.read_line(&mut line).map_err(|e| storage(&path, e))?;
            if read == 0 {
                break;
            }
            n += 1;
            if !line.ends_with('\n') {
                break;
            }
            let rec = serde_json::from_str(line.trim_end()).map_err(|e| storage(&path, format!("line {n}: {e}")))?;
            out.push(rec);
        }
        Ok(out)
    }
}

fn complete_prefix_len(file: &mut File) -> io::Result<u64> {
    file.seek(SeekFrom::Start(0))?;
    let mut reader = BufReader::new(&mut *file);
    let mut keep = 0u64;
    let mut buf = Vec::new();
    loop {
        buf.clear();
        let n = reader.read_until(b'\n', &mut buf)?;
        if n == 0 || buf.last() != Some(&b'\n') {
            return Ok(keep);
        }
        keep += n as u64;
    }
}

/// Session ids are lowercase hex so they are always safe file names.
pub fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
}

#[derive(Debug)]
pub struct LogWriter {
    file: File,
    path: PathBuf,
    policy: FsyncPolicy,
}

impl LogWriter {
    /// Appends records, one line each. The bytes are handed to the OS
    /// before this returns.
    pub fn append(&mut self, records: &[SessionEventRecord]) -> Result<(), HostError> {
        if records.is_empty() {
            return Ok(());
        }
        let mut buf = Vec::with_capacity(records.len() * 96);
        for r in records {
            serde_json::to_writer(&mut buf, r).map_err(|e| storage(&self.path, e))?;
            buf.push(b'\n');
            if self.policy == FsyncPolicy::Always {
                self.file.write_all(&buf).map_err(|e| storage(&self.path, e))?;
                self.file.sync_data().map_err(|e| storage(&self.path, e))?;
                buf.clear();
            }
        }
        self.file.write_all(&buf).map_err(|e| storage(&self.path, e))?;
        if self.policy == FsyncPolicy::PerBatch {
            self.file.sync_data().map_err(|e| storage(&self.path, e))?;
        }
        Ok(())
    }

    pub fn sync(&mut self) -> Result<(), HostError> {
        self.file.sync_all().map_err(|e| storage(&self.path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::record::RecordKind;

    fn rec(t: u32) -> SessionEventRecord {
        SessionEventRecord {
            t_ms: t,
            recv_seq: t as u16,
            kind: RecordKind::Event { code: 0, arg: 0 },
            payload: None,
        }
    }

    #[test]
    fn torn_tail_is_dropped_and_truncated() {
        let dir = tempfile::tempdir().unwrap();
        let store = SessionStore::open(dir.path()).unwrap();
        let r = SessionRecord {
            id: "ab12".into(),
            created_at: 1,
            regimen: Regimen::default(),
            status: SessionStatus::Open,
            device_label: None,
            token: BindingToken::default(),
        };
        store.save_record(&r).unwrap();
        store.create_log("ab12").unwrap();
        let mut w = store.open_writer("ab12", FsyncPolicy::Never).unwrap();
        w.append(&[rec(1), rec(2)]).unwrap();
        drop(w);
        let mut f = OpenOptions::new().append(true).open(store.log_path("ab12")).unwrap();
        f.write_all(b"{\"t_ms\":3,\"recv").unwrap();
        assert_eq!(store.read_log("ab12").unwrap(), vec![rec(1), rec(2)]);

        let mut w = store.open_writer("ab12", FsyncPolicy::Always).unwrap();
        w.append(&[rec(4)]).unwrap();
        assert_eq!(store.read_log("ab12").unwrap(), vec![rec(1), rec(2), rec(4)]);
        assert_eq!(store.list().unwrap(), vec![r]);
    }

    #[test]
    fn ids_are_checked_before_touching_files() {
        let dir = tempfile::tempdir().unwrap();
        let store = SessionStore::open(dir.path()).unwrap();
        assert!(!store.exists("../etc/passwd"));
        assert!(matches!(store.read_log("nope"), Err(HostError::NotFound(_))));
    }
}
