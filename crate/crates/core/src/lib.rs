//! Evaluation engine for predictions of contrast-enhancing tumour from
//! non-contrast brain MRI.
//!
//! The crate is organised by concern:
//!
//! - [`volume_io`]: NIfTI-1 parsing/serialization, percentile clamping and
//!   isotropic resampling.
//! - [`metrics`]: voxel and patient-level confusion metrics, detection tiers,
//!   ROC/PR curves.
//! - [`morphology`]: connected components, marching-cubes surface area,
//!   convex hulls, shape features and the radiomic category rules.
//! - [`stats`]: bootstrap, logistic/linear regression, classical tests.
//! - [`uncertainty`]: entropy maps and case-level probability summaries.
//! - [`equity`]: manifests, stratified reports and equity tests.
//! - [`phantom`]: synthetic cases with analytically known geometry.

pub mod equity;
pub mod error;
pub mod grid;
pub mod metrics;
pub mod morphology;
pub mod phantom;
pub mod stats;
pub mod uncertainty;
pub mod volume_io;

pub use error::{Error, ErrorClass, Result};
pub use grid::{Geometry, Grid, LabelGrid, Mask, ProbGrid, VoxelGrid};
