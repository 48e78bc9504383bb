//! Append-only event log with periodic snapshots.
//!
//! `events.jsonl` holds one `{"seq": n, "kind": ..., "payload": ...}` record
//! per line. Each append is flushed and synced before it is acknowledged, so
//! the only damage a crash can leave is a partial final line, which is cut
//! off on open. `snapshot.json` holds the state after some sequence number
//! and is replaced atomically.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::state::{Event, ServiceState};
use crate::{Result, ServiceError};

pub const LOG_FILE: &str = "events.jsonl";
pub const SNAPSHOT_FILE: &str = "snapshot.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub seq: u64,
    #[serde(flatten)]
    pub event: Event,
}

#[derive(Serialize, Deserialize)]
struct Snapshot {
    seq: u64,
    state: ServiceState,
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> ServiceError + '_ {
    move |source| ServiceError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Parses the log, cutting off a torn final line. Returns the records and
/// the byte length of the intact prefix.
pub fn parse_log(bytes: &[u8], path: &Path) -> Result<(Vec<LogRecord>, usize)> {
    let mut records = Vec::new();
    let mut offset = 0;
    while offset < bytes.len() {
        let Some(end) = bytes[offset..].iter().position(|&b| b == b'\n') else {
            log::warn!(
                "{}: dropping torn final record at byte {offset}",
                path.display()
            );
            break;
        };
        let line = &bytes[offset..offset + end];
        let record: LogRecord = serde_json::from_slice(line)
            .map_err(|e| ServiceError::Replay(format!("{} byte {offset}: {e}", path.display())))?;
        let expected = records.last().map_or(1, |r: &LogRecord| r.seq + 1);
        if record.seq != expected {
            return Err(ServiceError::Replay(format!(
                "{}: record {} where {expected} was expected",
                path.display(),
                record.seq
            )));
        }
        records.push(record);
        offset += end + 1;
    }
    Ok((records, offset))
}

pub struct EventLog {
    dir: PathBuf,
    file: File,
    next_seq: u64,
    snapshot_every: u64,
}

impl EventLog {
    /// Opens (or creates) the log in `dir` and rebuilds the state, starting
    /// from the snapshot when one exists. `snapshot_every = 0` disables
    /// snapshots.
    pub fn open(dir: &Path, snapshot_every: u64) -> Result<(Self, ServiceState)> {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        let path = dir.join(LOG_FILE);
        let bytes = match std::fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(io_err(&path)(e)),
        };
        let (records, intact) = parse_log(&bytes, &path)?;
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(io_err(&path))?;
        if intact < bytes.len() {
            file.set_len(intact as u64).map_err(io_err(&path))?;
            file.sync_data().map_err(io_err(&path))?;
        }

        let mut state = ServiceState::default();
        let snap_path = dir.join(SNAPSHOT_FILE);
        if snap_path.exists() {
            let text = std::fs::read(&snap_path).map_err(io_err(&snap_path))?;
            let snap: Snapshot = serde_json::from_slice(&text)
                .map_err(|e| ServiceError::Replay(format!("{}: {e}", snap_path.display())))?;
            if snap.seq > records.len() as u64 {
                return Err(ServiceError::Replay(format!(
                    "snapshot at {} is ahead of the log ({} records)",
                    snap.seq,
                    records.len()
                )));
            }
            state = snap.state;
        }
        replay(&mut state, &records)?;
        let log = Self {
            dir: dir.to_path_buf(),
            file,
            next_seq: records.len() as u64 + 1,
            snapshot_every,
        };
        Ok((log, state))
    }

    pub fn next_seq(&self) -> u64 {
        self.next_seq
    }

    /// Writes and syncs one record; returns its sequence number.
    pub fn append(&mut self, event: &Event) -> Result<u64> {
        let seq = self.next_seq;
        let mut line = serde_json::to_vec(&LogRecord {
            seq,
            event: event.clone(),
        })
        .map_err(|e| ServiceError::Internal(e.to_string()))?;
        line.push(b'\n');
        let path = self.dir.join(LOG_FILE);
        self.file.write_all(&line).map_err(io_err(&path))?;
        self.file.flush().map_err(io_err(&path))?;
        self.file.sync_data().map_err(io_err(&path))?;
        self.next_seq += 1;
        Ok(seq)
    }

    /// Writes a snapshot when `state` sits on a snapshot boundary.
    pub fn maybe_snapshot(&self, state: &ServiceState) -> Result<()> {
        if self.snapshot_every > 0
            && state.last_seq > 0
            && state.last_seq.is_multiple_of(self.snapshot_every)
        {
            self.snapshot(state)?;
        }
        Ok(())
    }

    pub fn snapshot(&self, state: &ServiceState) -> Result<()> {
        let path = self.dir.join(SNAPSHOT_FILE);
        let tmp = self.dir.join(format!("{SNAPSHOT_FILE}.tmp"));
        let bytes = serde_json::to_vec(&Snapshot {
            seq: state.last_seq,
            state: state.clone(),
        })
        .map_err(|e| ServiceError::Internal(e.to_string()))?;
        let mut f = File::create(&tmp).map_err(io_err(&tmp))?;
        f.write_all(&bytes).map_err(io_err(&tmp))?;
        f.sync_all().map_err(io_err(&tmp))?;
        std::fs::rename(&tmp, &path).map_err(io_err(&path))
    }
}

/// Applies the records that come after `state.last_seq`.
pub fn replay(state: &mut ServiceState, records: &[LogRecord]) -> Result<()> {
    let from = state.last_seq;
    for r in records.iter().filter(|r| r.seq > from) {
        state.apply(r.seq, &r.event)?;
    }
    Ok(())
}

/// Rebuilds the state from the log alone, ignoring any snapshot.
pub fn replay_log(dir: &Path) -> Result<ServiceState> {
    let path = dir.join(LOG_FILE);
    let bytes = std::fs::read(&path).map_err(io_err(&path))?;
    let (records, _) = parse_log(&bytes, &path)?;
    let mut state = ServiceState::default();
    replay(&mut state, &records)?;
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::SessionEvent;

    fn opened(i: usize) -> Event {
        Event::SessionEvent(SessionEvent::Opened {
            session: format!("s{i}"),
            campaign: "x".into(),
            annotator: "a".into(),
        })
    }

    #[test]
    fn torn_tail_is_dropped_but_damage_inside_is_an_error() {
        let good = serde_json::to_string(&LogRecord {
            seq: 1,
            event: opened(0),
        })
        .unwrap()
            + "\n";
        let torn = format!("{good}{{\"seq\":2,\"ki");
        let (recs, len) = parse_log(torn.as_bytes(), Path::new("log")).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(len, good.len());
        let broken = format!("{good}garbage\n{good}");
        assert!(matches!(
            parse_log(broken.as_bytes(), Path::new("log")),
            Err(ServiceError::Replay(_))
        ));
        let gap = format!("{good}{}", good.replace("\"seq\":1", "\"seq\":3"));
        assert!(parse_log(gap.as_bytes(), Path::new("log")).is_err());
    }

    #[test]
    fn record_layout() {
        let text = serde_json::to_string(&LogRecord {
            seq: 7,
            event: opened(1),
        })
        .unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["seq"], 7);
        assert_eq!(v["kind"], "session_event");
        assert_eq!(v["payload"]["event"], "opened");
        assert_eq!(serde_json::from_str::<LogRecord>(&text).unwrap().seq, 7);
    }

    #[test]
    fn reopening_truncates_the_torn_tail() {
        let dir = tempfile::tempdir().unwrap();
        let (mut log, state) = EventLog::open(dir.path(), 0).unwrap();
        assert_eq!(state, ServiceState::default());
        // the session references a missing campaign, but parsing does not care
        log.append(&opened(0)).unwrap();
        drop(log);
        let path = dir.path().join(LOG_FILE);
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{\"seq\":2").unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let (recs, intact) = parse_log(&bytes, &path).unwrap();
        assert_eq!(recs.len(), 1);
        assert!(intact < bytes.len());
    }
}
