use std::f64::consts::PI;

use rand::SeedableRng;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Geometry, LabelGrid, Mask, VoxelGrid, BACKGROUND, ENHANCING, NON_ENHANCING, NORMAL_BRAIN};
use crate::morphology::Category;

/// Empty voxels required between a lesion and every grid face.
pub const MARGIN: usize = 2;
pub const DEFAULT_CUBE_SIDE: usize = 30;
pub const DEFAULT_RIM_WIDTH: f64 = 2.0;

/// Lesion shapes; sizes are in voxels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Shape {
    Ball { radius: f64 },
    Ellipsoid { semi_axes: [f64; 3] },
    Cube { side: usize },
    MultiBall { count: usize, radius: f64 },
    /// Seeded random walk of small balls inside a sphere of `radius`.
    InfiltrativeBlob { radius: f64 },
}

impl Shape {
    pub fn name(&self) -> &'static str {
        match self {
            Shape::Ball { .. } => "ball",
            Shape::Ellipsoid { .. } => "ellipsoid",
            Shape::Cube { .. } => "cube",
            Shape::MultiBall { .. } => "multi_ball",
            Shape::InfiltrativeBlob { .. } => "infiltrative_blob",
        }
    }

    /// Same shape with linear size multiplied by `f` (cube sides rounded).
    pub fn scaled(self, f: f64) -> Shape {
        match self {
            Shape::Ball { radius } => Shape::Ball { radius: radius * f },
            Shape::Ellipsoid { semi_axes } => Shape::Ellipsoid { semi_axes: semi_axes.map(|a| a * f) },
            Shape::Cube { side } => Shape::Cube { side: ((side as f64 * f).round() as usize).max(1) },
            Shape::MultiBall { count, radius } => Shape::MultiBall { count, radius: radius * f },
            Shape::InfiltrativeBlob { radius } => Shape::InfiltrativeBlob { radius: radius * f },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomMetadata {
    pub cohort: String,
    pub pathology: String,
    pub country: String,
    pub age: Option<f64>,
    pub sex: Option<crate::equity::Sex>,
}

impl Default for PhantomMetadata {
    fn default() -> Self {
        PhantomMetadata {
            cohort: "phantom".into(),
            pathology: "presurgical glioma".into(),
            country: "synthetic".into(),
            age: None,
            sex: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    /// `None` produces a gt-negative case.
    pub shape: Option<Shape>,
    pub dims: [usize; 3],
    pub spacing_mm: f64,
    pub target_dice: Option<f64>,
    pub seed: u64,
    pub rim_width: Option<f64>,
    pub noise_sd: f32,
    pub metadata: PhantomMetadata,
}

impl PhantomSpec {
    pub fn new(shape: Option<Shape>, dims: [usize; 3]) -> Self {
        PhantomSpec {
            shape,
            dims,
            spacing_mm: 1.0,
            target_dice: None,
            seed: crate::stats::DEFAULT_SEED,
            rim_width: Some(DEFAULT_RIM_WIDTH),
            noise_sd: 5.0,
            metadata: PhantomMetadata::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        if let Some(t) = self.target_dice {
            if !(t > 0.0 && t <= 1.0) {
                return Err(Error::Validation(format!("target_dice {t} outside (0, 1]")));
            }
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::Validation("noise_sd must be non-negative".into()));
        }
        Ok(())
    }
}

/// Analytic value with an absolute tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub value: f64,
    pub tolerance: f64,
}

impl Band {
    pub fn contains(&self, x: f64) -> bool {
        (x - self.value).abs() <= self.tolerance
    }

    fn relative(value: f64, rel: f64) -> Band {
        Band { value, tolerance: value.abs() * rel }
    }
}

/// Feature values the morphology module must reproduce for a phantom lesion.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ExpectedFeatures {
    pub n_components: Option<usize>,
    pub volume_cm3: Option<Band>,
    pub sphericity: Option<Band>,
    pub compactness: Option<Band>,
    pub elongation: Option<Band>,
    pub solidity_min: Option<f64>,
    pub category: Option<Category>,
}

#[derive(Debug, Clone)]
pub struct PhantomCase {
    pub t1: VoxelGrid,
    pub t2: VoxelGrid,
    pub flair: VoxelGrid,
    pub gt: LabelGrid,
    pub lesion: Mask,
    pub expected: ExpectedFeatures,
}

fn center(dims: [usize; 3]) -> [f64; 3] {
    dims.map(|d| (d as f64 - 1.0) / 2.0)
}

fn ball_at(c: [f64; 3], r: f64) -> impl Fn([f64; 3]) -> bool {
    move |p| (0..3).map(|a| (p[a] - c[a]).powi(2)).sum::<f64>() <= r * r
}

/// Center-in digitisation of the lesion.
pub fn lesion_mask(shape: &Shape, geom: &Geometry, seed: u64) -> Result<Mask> {
    let dims = geom.dims;
    let c = center(dims);
    let inside: Box<dyn Fn([f64; 3]) -> bool> = match *shape {
        Shape::Ball { radius } => Box::new(ball_at(c, radius)),
        Shape::Ellipsoid { semi_axes } => {
            Box::new(move |p: [f64; 3]| (0..3).map(|a| ((p[a] - c[a]) / semi_axes[a]).powi(2)).sum::<f64>() <= 1.0)
        }
        Shape::Cube { side } => {
            let start = dims.map(|d| (d.saturating_sub(side) / 2) as f64);
            Box::new(move |p: [f64; 3]| (0..3).all(|a| p[a] >= start[a] && p[a] < start[a] + side as f64))
        }
        Shape::MultiBall { count, radius } => {
            // Balls on the x axis with two empty voxels between neighbours.
            let pitch = 2.0 * radius.floor() + 3.0;
            let first = c[0] - pitch * (count as f64 - 1.0) / 2.0;
            let balls: Vec<_> = (0..count).map(|i| ball_at([first + pitch * i as f64, c[1], c[2]], radius)).collect();
            Box::new(move |p: [f64; 3]| balls.iter().any(|b| b(p)))
        }
        Shape::InfiltrativeBlob { radius } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut centers = Vec::new();
            for _ in 0..4 {
                let mut p = c;
                for _ in 0..8 {
                    let r = (0..3).map(|_| rng.random_range(-2.5..2.5)).collect::<Vec<f64>>();
                    let q = [p[0] + r[0], p[1] + r[1], p[2] + r[2]];
                    if (0..3).map(|a| (q[a] - c[a]).powi(2)).sum::<f64>().sqrt() + 2.0 <= radius {
                        p = q;
                    }
                    centers.push((p, rng.random_range(1.2..2.0)));
                }
            }
            Box::new(move |p: [f64; 3]| centers.iter().any(|&(q, r)| ball_at(q, r)(p)))
        }
    };
    let mask = Mask::from_fn(geom.clone(), |x, y, z| inside([x as f64, y as f64, z as f64]))?;
    check_margin(&mask, shape)?;
    Ok(mask)
}

fn check_margin(mask: &Mask, shape: &Shape) -> Result<()> {
    let dims = mask.dims();
    if mask.count() == 0 {
        return Err(Error::Bounds(format!("{} produced no voxels", shape.name())));
    }
    for (i, &v) in mask.data().iter().enumerate() {
        if v {
            let p = mask.geometry().coords(i);
            if (0..3).any(|a| p[a] < MARGIN || p[a] + MARGIN >= dims[a]) {
                return Err(Error::Bounds(format!(
                    "{} does not fit in {:?} with a {MARGIN}-voxel margin",
                    shape.name(),
                    dims
                )));
            }
        }
    }
    Ok(())
}

/// Analytic expectations with tolerances covering the voxel staircase and
/// mesh smoothing.
pub fn expected_features(shape: &Shape, spacing_mm: f64) -> ExpectedFeatures {
    let voxel_cm3 = spacing_mm.powi(3) / 1000.0;
    match *shape {
        Shape::Ball { radius } => ExpectedFeatures {
            n_components: Some(1),
            volume_cm3: Some(Band::relative(4.0 / 3.0 * PI * radius.powi(3) * voxel_cm3, (1.5 / radius).min(0.5))),
            sphericity: Some(Band { value: 1.0, tolerance: (0.45 / radius).max(0.03) }),
            compactness: Some(Band { value: 1.0, tolerance: (1.35 / radius).max(0.09) }),
            elongation: Some(Band { value: 1.0, tolerance: (1.5 / radius).max(0.1) }),
            solidity_min: Some(0.9),
            category: Some(Category::WellCircumscribedSingle),
        },
        Shape::Cube { side } => {
            let s = side as f64;
            let sph = (PI / 6.0).cbrt();
            ExpectedFeatures {
                n_components: Some(1),
                volume_cm3: Some(Band { value: s.powi(3) * voxel_cm3, tolerance: 1e-9 }),
                sphericity: Some(Band::relative(sph, (0.9 / s).max(0.03))),
                compactness: Some(Band::relative(1.0 / sph.powi(3), 3.0 * (0.9 / s).max(0.03))),
                elongation: Some(Band { value: 1.0, tolerance: 1e-9 }),
                solidity_min: Some(0.9),
                category: (side >= 10).then_some(Category::WellCircumscribedSingle),
            }
        }
        Shape::Ellipsoid { semi_axes } => {
            let mut a = semi_axes;
            a.sort_by(|x, y| y.total_cmp(x));
            ExpectedFeatures {
                n_components: Some(1),
                volume_cm3: Some(Band::relative(4.0 / 3.0 * PI * a[0] * a[1] * a[2] * voxel_cm3, (1.5 / a[2]).min(0.5))),
                elongation: Some(Band::relative((a[0] / a[2]).powi(2), 0.1)),
                ..Default::default()
            }
        }
        Shape::MultiBall { count, .. } => ExpectedFeatures {
            n_components: Some(count),
            category: (count >= crate::morphology::MULTIPLE_MIN_COMPONENTS).then_some(Category::Multiple),
            ..Default::default()
        },
        Shape::InfiltrativeBlob { .. } => ExpectedFeatures::default(),
    }
}

/// Brain ball, lesion and optional non-enhancing rim.
fn label_map(geom: &Geometry, lesion: &Mask, rim_width: Option<f64>) -> Result<LabelGrid> {
    let dims = geom.dims;
    let c = center(dims);
    let brain_r = dims.iter().copied().min().unwrap_or(0) as f64 / 2.0 - 1.0;
    let in_brain = ball_at(c, brain_r);
    let mut labels: Vec<u8> = (0..geom.len())
        .map(|i| {
            let p = geom.coords(i).map(|v| v as f64);
            if in_brain(p) { NORMAL_BRAIN } else { BACKGROUND }
        })
        .collect();
    if let Some(w) = rim_width.filter(|&w| w > 0.0) {
        let k = w.floor() as i64;
        let offsets: Vec<[i64; 3]> = (-k..=k)
            .flat_map(|x| (-k..=k).flat_map(move |y| (-k..=k).map(move |z| [x, y, z])))
            .filter(|o| ((o[0] * o[0] + o[1] * o[1] + o[2] * o[2]) as f64) <= w * w)
            .collect();
        for (i, &v) in lesion.data().iter().enumerate() {
            if !v {
                continue;
            }
            let p = geom.coords(i);
            for o in &offsets {
                let q = [0, 1, 2].map(|a| p[a] as i64 + o[a]);
                if (0..3).all(|a| q[a] >= 0 && (q[a] as usize) < dims[a]) {
                    labels[geom.index(q[0] as usize, q[1] as usize, q[2] as usize)] = NON_ENHANCING;
                }
            }
        }
    }
    for (l, &v) in labels.iter_mut().zip(lesion.data()) {
        if v {
            *l = ENHANCING;
        }
    }
    LabelGrid::new(geom.clone(), labels)
}

/// Per-class means of the three synthetic sequences (t1, t2, flair).
const CLASS_MEANS: [[f32; 3]; 4] = [[0.0, 0.0, 0.0], [100.0, 80.0, 90.0], [80.0, 120.0, 140.0], [90.0, 110.0, 130.0]];

fn intensity(labels: &LabelGrid, seq: usize, noise_sd: f32, rng: &mut ChaCha8Rng) -> Result<VoxelGrid> {
    let geom = labels.geometry();
    let d = geom.dims.map(|v| v as f32);
    let normal = Normal::new(0.0f32, noise_sd.max(f32::MIN_POSITIVE)).expect("valid sd");
    let data = labels
        .data()
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            let p = geom.coords(i).map(|v| v as f32);
            // Smooth multiplicative bias field.
            let bias = 1.0 + 0.05 * (p[0] / d[0] * std::f32::consts::PI).sin() * (p[1] / d[1] * std::f32::consts::PI).cos();
            let noise = if noise_sd > 0.0 { normal.sample(rng) } else { 0.0 };
            (CLASS_MEANS[l as usize][seq] * bias + noise).max(0.0)
        })
        .collect();
    VoxelGrid::new(geom.clone(), data)
}

pub fn generate_case(spec: &PhantomSpec) -> Result<PhantomCase> {
    spec.validate()?;
    let geom = Geometry::isotropic(spec.dims, spec.spacing_mm)?;
    let lesion = match &spec.shape {
        Some(shape) => lesion_mask(shape, &geom, spec.seed)?,
        None => Mask::filled(geom.clone(), false)?,
    };
    let gt = label_map(&geom, &lesion, spec.rim_width)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let t1 = intensity(&gt, 0, spec.noise_sd, &mut rng)?;
    let t2 = intensity(&gt, 1, spec.noise_sd, &mut rng)?;
    let flair = intensity(&gt, 2, spec.noise_sd, &mut rng)?;
    let expected = spec.shape.as_ref().map(|s| expected_features(s, spec.spacing_mm)).unwrap_or_default();
    Ok(PhantomCase { t1, t2, flair, gt, lesion, expected })
}
