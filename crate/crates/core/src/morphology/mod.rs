//! Connected components, marching-cubes surfaces, convex hulls, shape
//! features and the lesion category rules.

mod category;
mod components;
mod dedup;
mod features;
mod hull;
mod marching_cubes;
mod mc_tables;

pub use category::*;
pub use components::*;
pub use dedup::*;
pub use features::*;
pub use hull::*;
pub use marching_cubes::*;
