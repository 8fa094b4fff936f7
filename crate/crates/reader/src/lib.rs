//! Reader-study service: blinded 100-case sessions of non-contrast MRI,
//! yes/no answers journaled to disk, and reader-versus-model reports.

pub mod error;
pub mod http;
pub mod journal;
pub mod pool;
pub mod render;
pub mod report;
pub mod service;
pub mod session;

pub use error::{ReaderError, Result};
pub use http::{router, serve, ServeConfig};
pub use pool::{CasePool, PoolCase, Sequence};
pub use render::Axis;
pub use report::{CrossTable, ReaderReport};
pub use service::{CaseDescriptor, ReaderService};
pub use session::{Ack, Answer, SessionStatus, SessionView, PER_CLASS, SESSION_SIZE};
