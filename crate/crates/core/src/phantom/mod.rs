//! Synthetic cases and cohorts with analytically known geometry.

mod cohort;
mod degrade;
mod shapes;

pub use cohort::*;
pub use degrade::*;
pub use shapes::*;
