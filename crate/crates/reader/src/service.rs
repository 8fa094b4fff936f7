use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard, RwLock};

use enhance_core::equity::load_manifest;
use enhance_core::grid::VoxelGrid;
use enhance_core::stats::bootstrap::iteration_seed;
use enhance_core::volume_io::load_intensity;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{ReaderError, Result};
use crate::journal::{Event, Journal};
use crate::pool::{CasePool, Sequence};
use crate::render::{display_window, render_png, Axis, Window};
use crate::report::{reader_report, CaseRow, ReaderReport, REPORT_BOOTSTRAP_ITERATIONS};
use crate::session::{allocate, now_ms, Ack, Answer, Response, Session, SessionState, SessionStatus, SessionView};

/// Snapshot cadence in journal events, besides completion.
const SNAPSHOT_EVERY: usize = 25;
/// Decoded volumes kept in memory.
const VOLUME_CACHE_CAPACITY: usize = 48;

/// What a reader is shown for the case at the cursor. Carries nothing that
/// identifies the case or hints at the answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseDescriptor {
    pub session_id: String,
    pub token: String,
    pub position: usize,
    pub total: usize,
    pub sequences: Vec<Sequence>,
    pub slice_counts: BTreeMap<Axis, usize>,
}

struct Entry {
    state: SessionState,
    events: usize,
}

struct Prepared {
    grid: VoxelGrid,
    window: Option<Window>,
}

#[derive(Default)]
struct VolumeCache {
    map: RwLock<HashMap<PathBuf, Arc<Prepared>>>,
}

impl VolumeCache {
    fn get(&self, path: &Path) -> Result<Arc<Prepared>> {
        if let Some(p) = self.map.read().expect("volume cache poisoned").get(path) {
            return Ok(p.clone());
        }
        let grid = load_intensity(path)?;
        let window = display_window(&grid)?;
        let prepared = Arc::new(Prepared { grid, window });
        let mut map = self.map.write().expect("volume cache poisoned");
        if map.len() >= VOLUME_CACHE_CAPACITY {
            map.clear();
        }
        map.insert(path.to_path_buf(), prepared.clone());
        Ok(prepared)
    }
}

/// Session allocation, presentation and scoring. Each session is guarded by
/// its own mutex; rendering only touches the immutable volume cache.
pub struct ReaderService {
    pool: CasePool,
    journal: Journal,
    base_seed: u64,
    sessions: RwLock<HashMap<String, Arc<Mutex<Entry>>>>,
    /// Session ids per reader in creation order.
    readers: Mutex<HashMap<String, Vec<String>>>,
    tokens: RwLock<HashMap<String, (String, usize)>>,
    volumes: VolumeCache,
}

fn lock(entry: &Mutex<Entry>) -> MutexGuard<'_, Entry> {
    entry.lock().expect("session lock poisoned")
}

impl ReaderService {
    /// Opens the service and replays every journal found in `journal_dir`.
    pub fn open(pool: CasePool, journal_dir: &Path, base_seed: u64) -> Result<Self> {
        let journal = Journal::open(journal_dir)?;
        let service = ReaderService {
            pool,
            journal,
            base_seed,
            sessions: RwLock::default(),
            readers: Mutex::default(),
            tokens: RwLock::default(),
            volumes: VolumeCache::default(),
        };
        let mut replayed = service.journal.replay_all()?;
        replayed.sort_by_key(|r| (r.state.session.created_at_ms, r.state.session.session_id.clone()));
        for r in replayed {
            if let Some(missing) = r.state.session.case_order.iter().find(|c| service.pool.get(c).is_none()) {
                return Err(ReaderError::Journal(format!(
                    "session {} references case {missing:?} which is not in the pool",
                    r.state.session.session_id
                )));
            }
            log::info!(
                "replayed session {} ({} of {} answered)",
                r.state.session.session_id,
                r.state.session.cursor,
                r.state.session.total()
            );
            let mut readers = service.readers.lock().expect("reader map poisoned");
            service.insert(&mut readers, Entry { state: r.state, events: r.events });
        }
        Ok(service)
    }

    pub fn from_manifest(manifest: &Path, journal_dir: &Path, base_seed: u64) -> Result<Self> {
        let manifest = load_manifest(manifest)?;
        let pool = CasePool::from_manifest(&manifest)?;
        log::info!("case pool: {} gt-positive, {} gt-negative", pool.count(true), pool.count(false));
        ReaderService::open(pool, journal_dir, base_seed)
    }

    pub fn pool(&self) -> &CasePool {
        &self.pool
    }

    fn insert(&self, readers: &mut HashMap<String, Vec<String>>, entry: Entry) {
        let s = &entry.state.session;
        let id = s.session_id.clone();
        {
            let mut tokens = self.tokens.write().expect("token map poisoned");
            for p in 0..s.total() {
                tokens.insert(s.token(p), (id.clone(), p));
            }
        }
        readers.entry(s.reader_id.clone()).or_default().push(id.clone());
        self.sessions.write().expect("session map poisoned").insert(id, Arc::new(Mutex::new(entry)));
    }

    fn entry(&self, session_id: &str) -> Result<Arc<Mutex<Entry>>> {
        self.sessions
            .read()
            .expect("session map poisoned")
            .get(session_id)
            .cloned()
            .ok_or_else(|| ReaderError::NotFound(format!("session {session_id:?}")))
    }

    fn token(&self, token: &str) -> Result<(String, usize)> {
        self.tokens
            .read()
            .expect("token map poisoned")
            .get(token)
            .cloned()
            .ok_or_else(|| ReaderError::NotFound("token".into()))
    }

    /// Default seed of a reader who does not supply one.
    pub fn reader_seed(&self, reader_id: &str) -> u64 {
        let digest = Sha256::digest(reader_id.as_bytes());
        let mut b = [0u8; 8];
        b.copy_from_slice(&digest[..8]);
        iteration_seed(self.base_seed, u64::from_le_bytes(b))
    }

    /// Allocates a 100-case session. A reader with an active session gets a
    /// conflict unless `replace` is set, which abandons the old session.
    pub fn create_session(&self, reader_id: &str, seed: Option<u64>, replace: bool) -> Result<SessionView> {
        let reader_id = reader_id.trim();
        if reader_id.is_empty() {
            return Err(ReaderError::BadRequest("reader_id must not be empty".into()));
        }
        // Held for the whole call so two creates for one reader cannot race.
        let mut readers = self.readers.lock().expect("reader map poisoned");
        let existing = readers.get(reader_id).cloned().unwrap_or_default();
        let seed = seed.unwrap_or_else(|| self.reader_seed(reader_id));
        let order = allocate(&self.pool, seed)?;
        let mut to_abandon = Vec::new();
        for id in &existing {
            let entry = self.entry(id)?;
            if lock(&entry).state.session.status == SessionStatus::Active {
                if !replace {
                    return Err(ReaderError::Conflict(format!(
                        "reader {reader_id:?} already has active session {id}; set replace to start over"
                    )));
                }
                to_abandon.push(entry);
            }
        }
        for entry in to_abandon {
            let mut e = lock(&entry);
            let id = e.state.session.session_id.clone();
            self.journal.append(&id, &Event::Abandoned { session_id: id.clone() })?;
            e.events += 1;
            e.state.session.status = SessionStatus::Abandoned;
            self.journal.write_snapshot(&e.state, e.events)?;
            log::info!("session {id} abandoned by reader {reader_id:?}");
        }
        let salt = hex::encode(rand::random::<[u8; 16]>());
        let session = Session::new(reader_id, existing.len(), order, seed, salt);
        let id = session.session_id.clone();
        if self.sessions.read().expect("session map poisoned").contains_key(&id) {
            return Err(ReaderError::Conflict(format!("session id {id} already exists")));
        }
        self.journal.append(&id, &Event::Created { session: session.clone() })?;
        let state = SessionState::new(session);
        self.journal.write_snapshot(&state, 1)?;
        let view = state.session.view();
        self.insert(&mut readers, Entry { state, events: 1 });
        log::info!("session {id} created for reader {reader_id:?} with seed {seed}");
        Ok(view)
    }

    pub fn session_view(&self, session_id: &str) -> Result<SessionView> {
        let entry = self.entry(session_id)?;
        let e = lock(&entry);
        Ok(e.state.session.view())
    }

    /// Full server-side state, including the case order. Never send this to
    /// a reader.
    pub fn session_state(&self, session_id: &str) -> Result<SessionState> {
        let entry = self.entry(session_id)?;
        let e = lock(&entry);
        Ok(e.state.clone())
    }

    fn ensure_active(session: &Session) -> Result<()> {
        match session.status {
            SessionStatus::Active => Ok(()),
            SessionStatus::Complete => Err(ReaderError::Complete),
            SessionStatus::Abandoned => Err(ReaderError::Conflict(format!("session {} was abandoned", session.session_id))),
        }
    }

    pub fn next_case(&self, session_id: &str) -> Result<CaseDescriptor> {
        let (case_id, token, position, total) = {
            let entry = self.entry(session_id)?;
            let e = lock(&entry);
            let s = &e.state.session;
            Self::ensure_active(s)?;
            (s.case_order[s.cursor].clone(), s.token(s.cursor), s.cursor, s.total())
        };
        let case = self.pool.get(&case_id).ok_or_else(|| ReaderError::NotFound(format!("case {case_id:?}")))?;
        let dims = self.volumes.get(case.path(Sequence::T1))?.grid.dims();
        Ok(CaseDescriptor {
            session_id: session_id.to_string(),
            token,
            position,
            total,
            sequences: Sequence::ALL.to_vec(),
            slice_counts: Axis::ALL.into_iter().map(|a| (a, a.slice_count(dims))).collect(),
        })
    }

    /// PNG of one slice of the case behind `token`. Only the case at the
    /// session cursor can be rendered.
    pub fn render_slice(&self, token: &str, sequence: Sequence, axis: Axis, index: usize) -> Result<Vec<u8>> {
        let (session_id, position) = self.token(token)?;
        let case_id = {
            let entry = self.entry(&session_id)?;
            let e = lock(&entry);
            let s = &e.state.session;
            Self::ensure_active(s)?;
            if position != s.cursor {
                return Err(ReaderError::Ordering { expected: s.cursor, got: position });
            }
            s.case_order[position].clone()
        };
        let case = self.pool.get(&case_id).ok_or_else(|| ReaderError::NotFound(format!("case {case_id:?}")))?;
        let volume = self.volumes.get(case.path(sequence))?;
        render_png(&volume.grid, volume.window, axis, index)
    }

    /// Records the answer for the case at the cursor. The journal append is
    /// synced before the in-memory state moves. Replaying an answered token
    /// with the same answer returns the original acknowledgement.
    pub fn record_response(&self, session_id: &str, token: &str, answer: Answer, duration_ms: u64) -> Result<Ack> {
        let (token_session, position) = self.token(token)?;
        if token_session != session_id {
            return Err(ReaderError::NotFound("token".into()));
        }
        let entry = self.entry(session_id)?;
        let mut e = lock(&entry);
        if let Some(previous) = e.state.responses.get(position) {
            return if previous.answer == answer {
                Ok(e.state.ack(position).expect("response exists"))
            } else {
                Err(ReaderError::Conflict(format!("position {position} was already answered {:?}", previous.answer)))
            };
        }
        Self::ensure_active(&e.state.session)?;
        let response = Response {
            session_id: session_id.to_string(),
            case_id: e.state.session.case_order[position].clone(),
            position,
            answer,
            duration_ms,
            recorded_at_ms: now_ms(),
        };
        e.state.validate(&response)?;
        self.journal.append(session_id, &Event::Response { response: response.clone() })?;
        e.state.apply(response)?;
        e.events += 1;
        if e.state.session.status == SessionStatus::Complete || e.events % SNAPSHOT_EVERY == 0 {
            self.journal.write_snapshot(&e.state, e.events)?;
        }
        Ok(e.state.ack(position).expect("just recorded"))
    }

    pub fn session_report(&self, session_id: &str) -> Result<ReaderReport> {
        let state = self.session_state(session_id)?;
        let s = &state.session;
        if s.status != SessionStatus::Complete {
            return Err(ReaderError::Incomplete { answered: s.cursor, total: s.total() });
        }
        let rows = state
            .responses
            .iter()
            .map(|r| {
                let case = self.pool.get(&r.case_id).ok_or_else(|| ReaderError::NotFound(format!("case {:?}", r.case_id)))?;
                Ok(CaseRow {
                    position: r.position,
                    case_id: r.case_id.clone(),
                    gt_positive: case.gt_positive,
                    model_positive: case.model_positive,
                    reader_positive: r.answer.is_positive(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        reader_report(&s.session_id, &s.reader_id, s.seed, rows, REPORT_BOOTSTRAP_ITERATIONS)
    }
}
