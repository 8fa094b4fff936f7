//! Manifests, stratified performance reports and equity tests.

mod evaluate;
mod manifest;
mod report;
mod stratify;

pub use evaluate::*;
pub use manifest::*;
pub use report::*;
pub use stratify::*;
