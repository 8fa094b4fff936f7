//! Volumetric grids sharing one geometry description.
//!
//! Voxel data is stored in NIfTI on-disk order: `x` varies fastest, then `y`,
//! then `z`, so the linear index of `(x, y, z)` is `x + nx * (y + ny * z)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BACKGROUND: u8 = 0;
pub const NORMAL_BRAIN: u8 = 1;
pub const NON_ENHANCING: u8 = 2;
pub const ENHANCING: u8 = 3;
pub const N_CLASSES: usize = 4;

/// Tolerance on the per-voxel channel sum of a probability grid.
pub const SIMPLEX_TOL: f32 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub dims: [usize; 3],
    /// Millimetres per voxel along each axis.
    pub spacing: [f64; 3],
    /// Voxel index to world (mm) transform, row-major.
    pub affine: [[f64; 4]; 4],
}

impl Geometry {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], affine: [[f64; 4]; 4]) -> Result<Self> {
        let geometry = Geometry {
            dims,
            spacing,
            affine,
        };
        geometry.validate()?;
        Ok(geometry)
    }

    /// Axis-aligned geometry with the origin at voxel (0, 0, 0).
    pub fn with_spacing(dims: [usize; 3], spacing: [f64; 3]) -> Result<Self> {
        Geometry::new(dims, spacing, diagonal_affine(spacing))
    }

    pub fn isotropic(dims: [usize; 3], mm: f64) -> Result<Self> {
        Geometry::with_spacing(dims, [mm; 3])
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.iter().any(|&d| d == 0) {
            return Err(Error::Validation(format!(
                "dimensions must be positive, got {:?}",
                self.dims
            )));
        }
        if self.spacing.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
            return Err(Error::Validation(format!(
                "spacing must be positive, got {:?}",
                self.spacing
            )));
        }
        if self.affine[3] != [0.0, 0.0, 0.0, 1.0] {
            return Err(Error::Validation(format!(
                "affine last row must be (0,0,0,1), got {:?}",
                self.affine[3]
            )));
        }
        if self.affine.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Validation("affine contains non-finite values".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn voxel_volume_mm3(&self) -> f64 {
        self.spacing[0] * self.spacing[1] * self.spacing[2]
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn coords(&self, index: usize) -> [usize; 3] {
        let nx = self.dims[0];
        let ny = self.dims[1];
        [index % nx, (index / nx) % ny, index / (nx * ny)]
    }

    /// Voxel centre in scanner-independent millimetres (index times spacing).
    pub fn center_mm(&self, index: usize) -> [f64; 3] {
        let c = self.coords(index);
        [
            c[0] as f64 * self.spacing[0],
            c[1] as f64 * self.spacing[1],
            c[2] as f64 * self.spacing[2],
        ]
    }

    pub fn ensure_aligned(&self, other: &Geometry) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::Alignment {
                left: self.describe(),
                right: other.describe(),
            })
        }
    }

    pub fn describe(&self) -> String {
        format!(
            "dims {:?} spacing {:?} affine {:?}",
            self.dims, self.spacing, self.affine
        )
    }
}

pub fn diagonal_affine(spacing: [f64; 3]) -> [[f64; 4]; 4] {
    [
        [spacing[0], 0.0, 0.0, 0.0],
        [0.0, spacing[1], 0.0, 0.0],
        [0.0, 0.0, spacing[2], 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ]
}

/// Per-voxel value constraint checked when a grid is built.
pub trait VoxelValue: Copy + Send + Sync + 'static {
    fn check(&self) -> std::result::Result<(), String>;
}

impl VoxelValue for f32 {
    fn check(&self) -> std::result::Result<(), String> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(format!("non-finite value {self}"))
        }
    }
}

impl VoxelValue for u8 {
    fn check(&self) -> std::result::Result<(), String> {
        if (*self as usize) < N_CLASSES {
            Ok(())
        } else {
            Err(format!("label value {self} outside {{0,1,2,3}}"))
        }
    }
}

impl VoxelValue for bool {
    fn check(&self) -> std::result::Result<(), String> {
        Ok(())
    }
}

impl VoxelValue for [f32; N_CLASSES] {
    fn check(&self) -> std::result::Result<(), String> {
        let mut sum = 0.0f32;
        for &p in self {
            if !(p.is_finite() && (-SIMPLEX_TOL..=1.0 + SIMPLEX_TOL).contains(&p)) {
                return Err(format!("probability {p} outside [0,1]"));
            }
            sum += p;
        }
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(format!("channel sum {sum} differs from 1"));
        }
        Ok(())
    }
}

/// Immutable voxel grid: a geometry plus one value per voxel.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    geometry: Geometry,
    data: Vec<T>,
}

pub type VoxelGrid = Grid<f32>;
pub type LabelGrid = Grid<u8>;
pub type ProbGrid = Grid<[f32; N_CLASSES]>;
pub type Mask = Grid<bool>;

impl<T: VoxelValue> Grid<T> {
    pub fn new(geometry: Geometry, data: Vec<T>) -> Result<Self> {
        geometry.validate()?;
        if data.len() != geometry.len() {
            return Err(Error::Validation(format!(
                "data length {} does not match dims {:?}",
                data.len(),
                geometry.dims
            )));
        }
        if let Some((i, msg)) = data
            .iter()
            .enumerate()
            .find_map(|(i, v)| v.check().err().map(|m| (i, m)))
        {
            return Err(Error::Validation(format!(
                "voxel {:?}: {msg}",
                geometry.coords(i)
            )));
        }
        Ok(Grid { geometry, data })
    }

    pub fn filled(geometry: Geometry, value: T) -> Result<Self> {
        let n = geometry.len();
        Grid::new(geometry, vec![value; n])
    }

    pub fn from_fn(geometry: Geometry, f: impl Fn(usize, usize, usize) -> T) -> Result<Self> {
        let [nx, ny, nz] = geometry.dims;
        let mut data = Vec::with_capacity(geometry.len());
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    data.push(f(x, y, z));
                }
            }
        }
        Grid::new(geometry, data)
    }

    /// Same geometry, new values.
    pub fn map<U: VoxelValue>(&self, f: impl Fn(T) -> U) -> Result<Grid<U>> {
        Grid::new(self.geometry.clone(), self.data.iter().map(|&v| f(v)).collect())
    }
}

impl<T> Grid<T> {
    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn dims(&self) -> [usize; 3] {
        self.geometry.dims
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> &T {
        &self.data[self.geometry.index(x, y, z)]
    }
}

impl LabelGrid {
    pub fn class_mask(&self, class: u8) -> Mask {
        Grid {
            geometry: self.geometry.clone(),
            data: self.data.iter().map(|&l| l == class).collect(),
        }
    }

    /// Voxels with a label above background.
    pub fn intracranial(&self) -> Mask {
        Grid {
            geometry: self.geometry.clone(),
            data: self.data.iter().map(|&l| l > BACKGROUND).collect(),
        }
    }

    pub fn count(&self, class: u8) -> usize {
        self.data.iter().filter(|&&l| l == class).count()
    }
}

impl Mask {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn volume_cm3(&self) -> f64 {
        self.count() as f64 * self.geometry.voxel_volume_mm3() / 1000.0
    }
}
