//! Append-only JSONL input log.

use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::TelemetryMessage;

use super::model::AlarmAction;

/// One accepted, state-changing input. Replaying the entries in order
/// rebuilds the business state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "ev", rename_all = "snake_case")]
pub enum LogEntry {
    Message { now: u64, msg: TelemetryMessage },
    Sweep { now: u64 },
    Alarm { now: u64, id: String, action: AlarmAction, operator: String },
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}:{line}: {message}")]
    Corrupt { path: PathBuf, line: usize, message: String },
}

pub trait EventLog: Send {
    fn append(&mut self, entry: &LogEntry) -> io::Result<()>;
}

/// Shared in-memory log; clones see the same entries.
#[derive(Debug, Clone, Default)]
pub struct MemoryLog(Arc<Mutex<Vec<LogEntry>>>);

impl MemoryLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> Vec<LogEntry> {
        self.0.lock().expect("log poisoned").clone()
    }

    pub fn to_jsonl(&self) -> String {
        to_jsonl(&self.entries())
    }
}

impl EventLog for MemoryLog {
    fn append(&mut self, entry: &LogEntry) -> io::Result<()> {
        self.0.lock().expect("log poisoned").push(entry.clone());
        Ok(())
    }
}

/// File-backed log; each entry is flushed as one line.
pub struct FileLog {
    writer: BufWriter<File>,
}

impl FileLog {
    pub fn open(path: &Path) -> Result<Self, LogError> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|source| LogError::Io { path: path.to_path_buf(), source })?;
        Ok(FileLog { writer: BufWriter::new(file) })
    }
}

impl EventLog for FileLog {
    fn append(&mut self, entry: &LogEntry) -> io::Result<()> {
        serde_json::to_writer(&mut self.writer, entry)?;
        self.writer.write_all(b"\n")?;
        self.writer.flush()
    }
}

pub fn to_jsonl(entries: &[LogEntry]) -> String {
    let mut out = String::new();
    for e in entries {
        out.push_str(&serde_json::to_string(e).expect("log entry serializes"));
        out.push('\n');
    }
    out
}

/// Parse a log. A torn final line without a trailing newline is dropped;
/// any other unparseable line is an error.
pub fn parse_jsonl(text: &str, path: &Path) -> Result<Vec<LogEntry>, LogError> {
    let mut entries = Vec::new();
    let torn_tail = !text.is_empty() && !text.ends_with('\n');
    let lines: Vec<&str> = text.lines().collect();
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<LogEntry>(line) {
            Ok(e) => entries.push(e),
            Err(_) if torn_tail && i + 1 == lines.len() => {
                log::warn!("{}: dropping torn final line", path.display());
            }
            Err(e) => {
                return Err(LogError::Corrupt { path: path.to_path_buf(), line: i + 1, message: e.to_string() });
            }
        }
    }
    Ok(entries)
}

pub fn read_log(path: &Path) -> Result<Vec<LogEntry>, LogError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(source) => return Err(LogError::Io { path: path.to_path_buf(), source }),
    };
    let mut text = String::new();
    let mut reader = BufReader::new(file);
    loop {
        let n = reader.read_line(&mut text).map_err(|source| LogError::Io { path: path.to_path_buf(), source })?;
        if n == 0 {
            break;
        }
    }
    parse_jsonl(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::MessageBody;

    fn hb(seq: u64) -> LogEntry {
        LogEntry::Message {
            now: seq * 1000,
            msg: TelemetryMessage {
                sid: "s1".into(),
                tid: "t1".into(),
                seq,
                ts: 0,
                tilt: 0.0,
                pwr: 0.92,
                body: MessageBody::Heartbeat,
            },
        }
    }

    #[test]
    fn jsonl_round_trip() {
        let entries = vec![
            hb(1),
            LogEntry::Sweep { now: 5 },
            LogEntry::Alarm { now: 6, id: "a000001".into(), action: AlarmAction::Ack, operator: "op".into() },
        ];
        let text = to_jsonl(&entries);
        assert_eq!(parse_jsonl(&text, Path::new("x")).unwrap(), entries);
    }

    #[test]
    fn torn_tail_dropped_but_middle_corruption_fails() {
        let mut text = to_jsonl(&[hb(1), hb(2)]);
        text.push_str("{\"ev\":\"sweep\",\"no");
        assert_eq!(parse_jsonl(&text, Path::new("x")).unwrap().len(), 2);
        let bad = format!("garbage\n{}", to_jsonl(&[hb(1)]));
        assert!(matches!(parse_jsonl(&bad, Path::new("x")), Err(LogError::Corrupt { line: 1, .. })));
    }

    #[test]
    fn file_log_appends() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.jsonl");
        {
            let mut log = FileLog::open(&path).unwrap();
            log.append(&hb(1)).unwrap();
        }
        {
            let mut log = FileLog::open(&path).unwrap();
            log.append(&hb(2)).unwrap();
        }
        assert_eq!(read_log(&path).unwrap(), vec![hb(1), hb(2)]);
        assert!(read_log(&dir.path().join("missing")).unwrap().is_empty());
    }
}
