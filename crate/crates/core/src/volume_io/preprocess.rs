//! Intensity clamping and isotropic resampling.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Geometry, Grid, VoxelGrid, VoxelValue, N_CLASSES};
use crate::stats::descriptive::{percentile_sorted, sort_values};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClampDomain {
    /// Percentiles over non-zero voxels only; zero voxels are left untouched.
    #[default]
    Nonzero,
    All,
}

pub const DEFAULT_CLAMP_LO: f64 = 1.0;
pub const DEFAULT_CLAMP_HI: f64 = 99.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClampBounds {
    pub lo: f32,
    pub hi: f32,
    pub domain: ClampDomain,
}

fn in_domain(v: f32, domain: ClampDomain) -> bool {
    match domain {
        ClampDomain::All => true,
        ClampDomain::Nonzero => v != 0.0,
    }
}

pub fn percentile_bounds(grid: &VoxelGrid, lo: f64, hi: f64, domain: ClampDomain) -> Result<ClampBounds> {
    if !(0.0..100.0).contains(&lo) || !(lo < hi && hi <= 100.0) {
        return Err(Error::Validation(format!(
            "percentiles must satisfy 0 <= lo < hi <= 100, got lo={lo} hi={hi}"
        )));
    }
    let mut values: Vec<f64> = grid
        .data()
        .iter()
        .filter(|&&v| in_domain(v, domain))
        .map(|&v| v as f64)
        .collect();
    if values.is_empty() {
        return Err(Error::Degenerate(
            "no voxels in the clamping domain (all-zero volume)".into(),
        ));
    }
    sort_values(&mut values);
    Ok(ClampBounds {
        lo: percentile_sorted(&values, lo) as f32,
        hi: percentile_sorted(&values, hi) as f32,
        domain,
    })
}

/// Clamp in-domain voxels to fixed bounds.
pub fn clamp_to(grid: &VoxelGrid, bounds: ClampBounds) -> VoxelGrid {
    grid.map(|v| {
        if in_domain(v, bounds.domain) {
            v.clamp(bounds.lo, bounds.hi)
        } else {
            v
        }
    })
    .expect("clamping keeps values finite")
}

/// Clamp intensities at the `lo`-th and `hi`-th percentiles of the chosen domain.
pub fn percentile_clamp(grid: &VoxelGrid, lo: f64, hi: f64, domain: ClampDomain) -> Result<VoxelGrid> {
    let bounds = percentile_bounds(grid, lo, hi, domain)?;
    Ok(clamp_to(grid, bounds))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    Trilinear,
    Nearest,
}

/// Voxel types that can be resampled.
pub trait Resample: VoxelValue {
    const LINEAR_OK: bool;
    /// Weighted combination of the eight trilinear neighbours.
    fn blend(samples: &[(Self, f64); 8]) -> Self;
}

impl Resample for f32 {
    const LINEAR_OK: bool = true;
    fn blend(samples: &[(Self, f64); 8]) -> Self {
        samples.iter().map(|&(v, w)| v as f64 * w).sum::<f64>() as f32
    }
}

impl Resample for u8 {
    const LINEAR_OK: bool = false;
    fn blend(_: &[(Self, f64); 8]) -> Self {
        unreachable!("labels only resample with nearest neighbour")
    }
}

impl Resample for bool {
    const LINEAR_OK: bool = false;
    fn blend(_: &[(Self, f64); 8]) -> Self {
        unreachable!("masks only resample with nearest neighbour")
    }
}

impl Resample for [f32; N_CLASSES] {
    const LINEAR_OK: bool = true;
    fn blend(samples: &[(Self, f64); 8]) -> Self {
        let mut acc = [0.0f64; N_CLASSES];
        for (p, w) in samples {
            for c in 0..N_CLASSES {
                acc[c] += p[c] as f64 * w;
            }
        }
        let total: f64 = acc.iter().map(|v| v.max(0.0)).sum();
        std::array::from_fn(|c| (acc[c].max(0.0) / total) as f32)
    }
}

/// Resample onto an isotropic grid of `target_mm`, keeping voxel (0,0,0) fixed in world space.
pub fn resample_isotropic<T: Resample>(grid: &Grid<T>, target_mm: f64, mode: Interpolation) -> Result<Grid<T>> {
    if !(target_mm.is_finite() && target_mm > 0.0) {
        return Err(Error::Validation(format!("target spacing {target_mm} must be positive")));
    }
    if mode == Interpolation::Trilinear && !T::LINEAR_OK {
        return Err(Error::Mode(
            "trilinear interpolation requested for a label grid; use nearest".into(),
        ));
    }
    let src = grid.geometry();
    let mut ratio = [1.0f64; 3];
    let mut dims = src.dims;
    for axis in 0..3 {
        if src.spacing[axis] != target_mm {
            ratio[axis] = target_mm / src.spacing[axis];
            dims[axis] = ((src.dims[axis] as f64 * src.spacing[axis] / target_mm) - 1e-9)
                .ceil()
                .max(1.0) as usize;
        }
    }
    if ratio == [1.0; 3] {
        return Ok(grid.clone());
    }
    let mut affine = src.affine;
    for row in affine.iter_mut().take(3) {
        for axis in 0..3 {
            row[axis] *= ratio[axis];
        }
    }
    let geometry = Geometry::new(dims, [target_mm; 3], affine)?;
    let data = grid.data();
    let max = [src.dims[0] - 1, src.dims[1] - 1, src.dims[2] - 1];
    let source_pos = |i: usize, axis: usize| (i as f64 * ratio[axis]).min(max[axis] as f64);

    let out = match mode {
        Interpolation::Nearest => Grid::from_fn(geometry, |x, y, z| {
            let p = [source_pos(x, 0), source_pos(y, 1), source_pos(z, 2)];
            let q: [usize; 3] = std::array::from_fn(|a| (p[a] + 0.5).floor().min(max[a] as f64) as usize);
            data[src.index(q[0], q[1], q[2])]
        })?,
        Interpolation::Trilinear => Grid::from_fn(geometry, |x, y, z| {
            let p = [source_pos(x, 0), source_pos(y, 1), source_pos(z, 2)];
            let base: [usize; 3] = std::array::from_fn(|a| p[a].floor() as usize);
            let frac: [f64; 3] = std::array::from_fn(|a| p[a] - base[a] as f64);
            let samples: [(T, f64); 8] = std::array::from_fn(|corner| {
                let off = [corner & 1, (corner >> 1) & 1, (corner >> 2) & 1];
                let idx: [usize; 3] = std::array::from_fn(|a| (base[a] + off[a]).min(max[a]));
                let w: f64 = (0..3)
                    .map(|a| if off[a] == 1 { frac[a] } else { 1.0 - frac[a] })
                    .product();
                (data[src.index(idx[0], idx[1], idx[2])], w)
            });
            T::blend(&samples)
        })?,
    };
    Ok(out)
}
