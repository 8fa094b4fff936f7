//! Voxel- and patient-level segmentation and detection metrics.

mod case;
mod confusion;
mod curves;

pub use case::*;
pub use confusion::*;
pub use curves::*;
