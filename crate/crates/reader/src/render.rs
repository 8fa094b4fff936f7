use std::fmt;
use std::str::FromStr;

use enhance_core::grid::VoxelGrid;
use enhance_core::volume_io::{percentile_bounds, ClampDomain, DEFAULT_CLAMP_HI, DEFAULT_CLAMP_LO};
use enhance_core::Error as CoreError;
use serde::{Deserialize, Serialize};

use crate::error::{ReaderError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    /// Fixed z.
    Axial,
    /// Fixed y.
    Coronal,
    /// Fixed x.
    Sagittal,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::Axial, Axis::Coronal, Axis::Sagittal];

    pub fn as_str(self) -> &'static str {
        match self {
            Axis::Axial => "axial",
            Axis::Coronal => "coronal",
            Axis::Sagittal => "sagittal",
        }
    }

    pub fn slice_count(self, dims: [usize; 3]) -> usize {
        match self {
            Axis::Axial => dims[2],
            Axis::Coronal => dims[1],
            Axis::Sagittal => dims[0],
        }
    }
}

impl FromStr for Axis {
    type Err = ReaderError;

    fn from_str(s: &str) -> Result<Self> {
        Axis::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| ReaderError::BadRequest(format!("unknown axis {s:?}; expected axial, coronal or sagittal")))
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Display window; `None` for an all-zero volume.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub lo: f32,
    pub hi: f32,
}

/// 1st to 99th percentile of the nonzero voxels.
pub fn display_window(grid: &VoxelGrid) -> Result<Option<Window>> {
    match percentile_bounds(grid, DEFAULT_CLAMP_LO, DEFAULT_CLAMP_HI, ClampDomain::Nonzero) {
        Ok(b) => Ok(Some(Window { lo: b.lo, hi: b.hi })),
        Err(CoreError::Degenerate(_)) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

fn gray(v: f32, window: Option<Window>) -> u8 {
    let Some(w) = window else { return 0 };
    if v == 0.0 {
        return 0;
    }
    if w.hi <= w.lo {
        return match v.partial_cmp(&w.lo) {
            Some(std::cmp::Ordering::Less) => 0,
            Some(std::cmp::Ordering::Equal) => 128,
            _ => 255,
        };
    }
    let t = ((v - w.lo) / (w.hi - w.lo)).clamp(0.0, 1.0);
    (t * 255.0).round() as u8
}

/// Grayscale pixels of one slice, row-major, top row first. Rows run from
/// high to low y (axial) or z (coronal, sagittal) so the image is upright.
pub fn slice_pixels(grid: &VoxelGrid, window: Option<Window>, axis: Axis, index: usize) -> Result<(u32, u32, Vec<u8>)> {
    let [nx, ny, nz] = grid.dims();
    let count = axis.slice_count([nx, ny, nz]);
    if index >= count {
        return Err(ReaderError::OutOfRange(format!("{axis} slice {index} of {count}")));
    }
    let (w, h) = match axis {
        Axis::Axial => (nx, ny),
        Axis::Coronal => (nx, nz),
        Axis::Sagittal => (ny, nz),
    };
    let mut pixels = Vec::with_capacity(w * h);
    for row in 0..h {
        let v = h - 1 - row;
        for u in 0..w {
            let (x, y, z) = match axis {
                Axis::Axial => (u, v, index),
                Axis::Coronal => (u, index, v),
                Axis::Sagittal => (index, u, v),
            };
            pixels.push(gray(*grid.get(x, y, z), window));
        }
    }
    Ok((w as u32, h as u32, pixels))
}

pub fn encode_png(width: u32, height: u32, pixels: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let mut enc = png::Encoder::new(&mut out, width, height);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header().map_err(|e| ReaderError::Render(e.to_string()))?;
    writer.write_image_data(pixels).map_err(|e| ReaderError::Render(e.to_string()))?;
    writer.finish().map_err(|e| ReaderError::Render(e.to_string()))?;
    Ok(out)
}

pub fn render_png(grid: &VoxelGrid, window: Option<Window>, axis: Axis, index: usize) -> Result<Vec<u8>> {
    let (w, h, pixels) = slice_pixels(grid, window, axis, index)?;
    encode_png(w, h, &pixels)
}
