//! Append-only JSONL journal per session with a compacted snapshot.
//!
//! `<dir>/<session_id>.jsonl` holds one event per line and is fsynced after
//! every append. `<dir>/<session_id>.snapshot.json` stores the state after
//! the first `events` journal lines; replay starts from it when present.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{ReaderError, Result};
use crate::session::{Response, Session, SessionState, SessionStatus};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "lowercase")]
pub enum Event {
    Created { session: Session },
    Response { response: Response },
    Abandoned { session_id: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Snapshot {
    events: usize,
    state: SessionState,
}

/// A session rebuilt from disk plus the number of journal events it covers.
#[derive(Debug, Clone, PartialEq)]
pub struct Replayed {
    pub state: SessionState,
    pub events: usize,
}

#[derive(Debug, Clone)]
pub struct Journal {
    dir: PathBuf,
}

impl Journal {
    pub fn open(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| ReaderError::io(dir, e))?;
        Ok(Journal { dir: dir.to_path_buf() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn journal_path(&self, session_id: &str) -> PathBuf {
        self.dir.join(format!("{session_id}.jsonl"))
    }

    pub fn snapshot_path(&self, session_id: &str) -> PathBuf {
        self.dir.join(format!("{session_id}.snapshot.json"))
    }

    /// Appends one event and syncs it to disk before returning.
    pub fn append(&self, session_id: &str, event: &Event) -> Result<()> {
        let path = self.journal_path(session_id);
        let mut line = serde_json::to_vec(event).map_err(|e| ReaderError::Journal(e.to_string()))?;
        line.push(b'\n');
        let mut f = OpenOptions::new().create(true).append(true).open(&path).map_err(|e| ReaderError::io(&path, e))?;
        f.write_all(&line).map_err(|e| ReaderError::io(&path, e))?;
        f.sync_data().map_err(|e| ReaderError::io(&path, e))
    }

    /// Writes the snapshot through a temporary file and a rename.
    pub fn write_snapshot(&self, state: &SessionState, events: usize) -> Result<()> {
        let path = self.snapshot_path(&state.session.session_id);
        let tmp = path.with_extension("json.tmp");
        let bytes = serde_json::to_vec(&Snapshot { events, state: state.clone() })
            .map_err(|e| ReaderError::Journal(e.to_string()))?;
        let mut f = File::create(&tmp).map_err(|e| ReaderError::io(&tmp, e))?;
        f.write_all(&bytes).map_err(|e| ReaderError::io(&tmp, e))?;
        f.sync_all().map_err(|e| ReaderError::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| ReaderError::io(&path, e))
    }

    /// Reads the journal events of one session. A torn final line (crash in
    /// the middle of an append) is dropped and trimmed from the file so later
    /// appends start on a clean line.
    pub fn read_events(&self, session_id: &str) -> Result<Vec<Event>> {
        let path = self.journal_path(session_id);
        let bytes = fs::read(&path).map_err(|e| ReaderError::io(&path, e))?;
        let complete = match bytes.iter().rposition(|&b| b == b'\n') {
            Some(i) => i + 1,
            None => 0,
        };
        if complete < bytes.len() {
            log::warn!("{}: dropping torn final line ({} bytes)", path.display(), bytes.len() - complete);
            let f = OpenOptions::new().write(true).open(&path).map_err(|e| ReaderError::io(&path, e))?;
            f.set_len(complete as u64).map_err(|e| ReaderError::io(&path, e))?;
            f.sync_data().map_err(|e| ReaderError::io(&path, e))?;
        }
        bytes[..complete]
            .split(|&b| b == b'\n')
            .filter(|l| !l.is_empty())
            .enumerate()
            .map(|(i, l)| {
                serde_json::from_slice(l)
                    .map_err(|e| ReaderError::Journal(format!("{} line {}: {e}", path.display(), i + 1)))
            })
            .collect()
    }

    fn read_snapshot(&self, session_id: &str) -> Option<Snapshot> {
        let path = self.snapshot_path(session_id);
        let bytes = fs::read(&path).ok()?;
        match serde_json::from_slice(&bytes) {
            Ok(s) => Some(s),
            Err(e) => {
                log::warn!("{}: ignoring unreadable snapshot: {e}", path.display());
                None
            }
        }
    }

    pub fn replay(&self, session_id: &str) -> Result<Replayed> {
        let events = self.read_events(session_id)?;
        let snapshot = self.read_snapshot(session_id).filter(|s| s.events <= events.len());
        let (mut state, start) = match snapshot {
            Some(s) => (Some(s.state), s.events),
            None => (None, 0),
        };
        for (i, event) in events.iter().enumerate().skip(start) {
            let bad = |msg: String| ReaderError::Journal(format!("session {session_id} event {}: {msg}", i + 1));
            match (event, state.as_mut()) {
                (Event::Created { session }, None) => state = Some(SessionState::new(session.clone())),
                (Event::Response { response }, Some(s)) => s.apply(response.clone()).map_err(|e| bad(e.to_string()))?,
                (Event::Abandoned { .. }, Some(s)) => s.session.status = SessionStatus::Abandoned,
                (Event::Created { .. }, Some(_)) => return Err(bad("duplicate created event".into())),
                (_, None) => return Err(bad("event before created".into())),
            }
        }
        let state = state.ok_or_else(|| ReaderError::Journal(format!("session {session_id}: empty journal")))?;
        if state.session.session_id != session_id {
            return Err(ReaderError::Journal(format!(
                "journal {session_id} holds session {}",
                state.session.session_id
            )));
        }
        Ok(Replayed { state, events: events.len() })
    }

    /// Replays every journal in the directory, ordered by session id.
    pub fn replay_all(&self) -> Result<Vec<Replayed>> {
        let mut ids: Vec<String> = fs::read_dir(&self.dir)
            .map_err(|e| ReaderError::io(&self.dir, e))?
            .filter_map(|e| e.ok())
            .filter_map(|e| e.file_name().to_str().and_then(|n| n.strip_suffix(".jsonl")).map(String::from))
            .collect();
        ids.sort();
        ids.iter().map(|id| self.replay(id)).collect()
    }
}
