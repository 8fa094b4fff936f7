//! NIfTI-1 volumes and the preprocessing applied before evaluation.

mod nifti;
mod preprocess;

pub use nifti::*;
pub use preprocess::*;
