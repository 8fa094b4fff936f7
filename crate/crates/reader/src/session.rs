use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{ReaderError, Result};
use crate::pool::CasePool;

pub const SESSION_SIZE: usize = 100;
pub const PER_CLASS: usize = SESSION_SIZE / 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Answer {
    Yes,
    No,
}

impl Answer {
    pub fn is_positive(self) -> bool {
        self == Answer::Yes
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionStatus {
    Active,
    Complete,
    /// Replaced by a newer session for the same reader.
    Abandoned,
}

/// Server-side session state; clients only ever see [`SessionView`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub reader_id: String,
    pub case_order: Vec<String>,
    pub cursor: usize,
    pub seed: u64,
    pub created_at_ms: u64,
    pub status: SessionStatus,
    /// Secret mixed into presentation tokens.
    pub token_salt: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub reader_id: String,
    pub cursor: usize,
    pub total: usize,
    pub status: SessionStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub session_id: String,
    pub case_id: String,
    pub position: usize,
    pub answer: Answer,
    pub duration_ms: u64,
    pub recorded_at_ms: u64,
}

/// Acknowledgement of a recorded answer; replays return the original.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    pub session_id: String,
    pub position: usize,
    pub answer: Answer,
    pub cursor: usize,
    pub status: SessionStatus,
}

pub fn now_ms() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// Deterministic id from reader, seed and the reader's session count.
pub fn session_id_for(reader_id: &str, seed: u64, ordinal: usize) -> String {
    let mut h = Sha256::new();
    h.update(reader_id.as_bytes());
    h.update([0]);
    h.update(seed.to_le_bytes());
    h.update((ordinal as u64).to_le_bytes());
    hex::encode(&h.finalize()[..8])
}

/// 50 gt-positive and 50 gt-negative cases drawn without replacement and
/// shuffled together.
pub fn allocate(pool: &CasePool, seed: u64) -> Result<Vec<String>> {
    let pos: Vec<&str> = pool.cases().iter().filter(|c| c.gt_positive).map(|c| c.case_id.as_str()).collect();
    let neg: Vec<&str> = pool.cases().iter().filter(|c| !c.gt_positive).map(|c| c.case_id.as_str()).collect();
    if pos.len() < PER_CLASS || neg.len() < PER_CLASS {
        return Err(ReaderError::Capacity(format!(
            "need {PER_CLASS} gt-positive and {PER_CLASS} gt-negative test cases with predictions, have {} and {}",
            pos.len(),
            neg.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<String> = pos
        .choose_multiple(&mut rng, PER_CLASS)
        .chain(neg.choose_multiple(&mut rng, PER_CLASS))
        .map(|s| s.to_string())
        .collect();
    order.shuffle(&mut rng);
    Ok(order)
}

impl Session {
    pub fn new(reader_id: &str, ordinal: usize, case_order: Vec<String>, seed: u64, token_salt: String) -> Self {
        Session {
            session_id: session_id_for(reader_id, seed, ordinal),
            reader_id: reader_id.to_string(),
            case_order,
            cursor: 0,
            seed,
            created_at_ms: now_ms(),
            status: SessionStatus::Active,
            token_salt,
        }
    }

    pub fn total(&self) -> usize {
        self.case_order.len()
    }

    /// Opaque presentation token for a position.
    pub fn token(&self, position: usize) -> String {
        let mut h = Sha256::new();
        h.update(self.token_salt.as_bytes());
        h.update(self.session_id.as_bytes());
        h.update((position as u64).to_le_bytes());
        hex::encode(&h.finalize()[..12])
    }

    pub fn view(&self) -> SessionView {
        SessionView {
            session_id: self.session_id.clone(),
            reader_id: self.reader_id.clone(),
            cursor: self.cursor,
            total: self.total(),
            status: self.status,
        }
    }
}

/// Session plus its responses, rebuilt from the journal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub session: Session,
    pub responses: Vec<Response>,
}

impl SessionState {
    pub fn new(session: Session) -> Self {
        SessionState { session, responses: Vec::new() }
    }

    /// Checks that `response` is the next answer; does not mutate.
    pub fn validate(&self, response: &Response) -> Result<()> {
        let s = &self.session;
        if s.status != SessionStatus::Active {
            return Err(ReaderError::Complete);
        }
        if response.position != s.cursor {
            return Err(ReaderError::Ordering { expected: s.cursor, got: response.position });
        }
        if s.case_order.get(response.position) != Some(&response.case_id) {
            return Err(ReaderError::Journal(format!("response for {} does not match the case order", response.case_id)));
        }
        Ok(())
    }

    pub fn apply(&mut self, response: Response) -> Result<()> {
        self.validate(&response)?;
        self.responses.push(response);
        self.session.cursor += 1;
        if self.session.cursor == self.session.total() {
            self.session.status = SessionStatus::Complete;
        }
        Ok(())
    }

    pub fn ack(&self, position: usize) -> Option<Ack> {
        self.responses.get(position).map(|r| Ack {
            session_id: self.session.session_id.clone(),
            position,
            answer: r.answer,
            cursor: position + 1,
            status: if position + 1 == self.session.total() { SessionStatus::Complete } else { SessionStatus::Active },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pool::PoolCase;

    pub(crate) fn pool(n_pos: usize, n_neg: usize) -> CasePool {
        let cases = (0..n_pos + n_neg)
            .map(|i| PoolCase {
                case_id: format!("case-{i:03}"),
                gt_positive: i < n_pos,
                model_positive: i % 3 != 0,
                sequences: Default::default(),
            })
            .collect();
        CasePool::new(cases).unwrap()
    }

    #[test]
    fn exactly_fifty_fifty() {
        let p = pool(60, 60);
        let order = allocate(&p, 1).unwrap();
        assert_eq!(order.len(), 100);
        let pos = order.iter().filter(|id| p.get(id).unwrap().gt_positive).count();
        assert_eq!(pos, 50);
        let mut sorted = order.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), 100);
    }

    #[test]
    fn deterministic_per_seed() {
        let p = pool(70, 55);
        assert_eq!(allocate(&p, 9).unwrap(), allocate(&p, 9).unwrap());
        assert_ne!(allocate(&p, 9).unwrap(), allocate(&p, 10).unwrap());
    }

    #[test]
    fn capacity_error_states_counts() {
        let err = allocate(&pool(30, 80), 1).unwrap_err();
        assert!(matches!(err, ReaderError::Capacity(_)));
        assert!(err.to_string().contains("have 30 and 80"), "{err}");
    }

    #[test]
    fn allocation_is_uniform_over_cases() {
        // Goodness of fit of per-case selection counts over 200 seeds.
        let p = pool(80, 64);
        let mut counts = vec![0u64; 144];
        for seed in 0..200 {
            for id in allocate(&p, seed).unwrap() {
                counts[p.index_of(&id).unwrap()] += 1;
            }
        }
        for (range, n) in [(0..80, 80.0), (80..144, 64.0)] {
            let expected = 200.0 * PER_CLASS as f64 / n;
            let chi2: f64 = counts[range].iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
            let p_value = enhance_core::stats::special::chi2_sf(chi2, n - 1.0);
            assert!(p_value > 0.001, "chi2 {chi2}, p {p_value}");
        }
    }

    #[test]
    fn tokens_are_opaque_and_distinct() {
        let s = Session::new("r1", 0, allocate(&pool(50, 50), 3).unwrap(), 3, "salt".into());
        let tokens: std::collections::HashSet<String> = (0..100).map(|i| s.token(i)).collect();
        assert_eq!(tokens.len(), 100);
        assert!(tokens.iter().all(|t| t.len() == 24 && t.bytes().all(|b| b.is_ascii_hexdigit())));
        assert!(tokens.iter().all(|t| !s.case_order.iter().any(|c| t.contains(c.as_str()))));
    }
}
