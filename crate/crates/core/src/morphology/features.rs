use std::f64::consts::PI;

use nalgebra::{Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::category::{classify_category, Category};
use super::components::{connected_components, ComponentSet, Connectivity};
use super::hull::convex_hull_volume;
use super::marching_cubes::surface_mesh;
use crate::error::{Error, Result};
use crate::grid::Mask;

pub const FLAG_DEGENERATE_HULL: &str = "degenerate-hull:solidity-1";
pub const FLAG_SOLIDITY_ABOVE_ONE: &str = "solidity-above-1";
pub const FLAG_ELONGATION_INFINITE: &str = "elongation-infinite";
pub const FLAG_SINGLE_VOXEL: &str = "single-voxel:elongation-1";
pub const FLAG_RULE_GAP: &str = "rule-gap";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiomicFeatures {
    pub n_components: usize,
    pub volume_cm3: f64,
    pub surface_area_mm2: f64,
    pub sphericity: f64,
    pub solidity: f64,
    pub compactness: f64,
    /// A / V in 1/mm.
    pub surface_to_volume: f64,
    /// `None` when the smallest covariance eigenvalue vanishes (planar or
    /// linear lesion).
    pub elongation: Option<f64>,
    pub category: Option<Category>,
    pub flags: Vec<String>,
}

impl RadiomicFeatures {
    fn volume_mm3(&self) -> f64 {
        self.volume_cm3 * 1000.0
    }
}

pub fn sphericity(volume_mm3: f64, area_mm2: f64) -> f64 {
    PI.cbrt() * (6.0 * volume_mm3).powf(2.0 / 3.0) / area_mm2
}

pub fn compactness(volume_mm3: f64, area_mm2: f64) -> f64 {
    area_mm2.powi(3) / (36.0 * PI * volume_mm3 * volume_mm3)
}

/// Largest over smallest eigenvalue of the population covariance of voxel
/// centres in mm. `Ok(None)` when the smallest is below 1e-9 of the largest.
pub fn elongation(mask: &Mask) -> Result<Option<f64>> {
    let geom = mask.geometry();
    let centres: Vec<[f64; 3]> = mask
        .data()
        .iter()
        .enumerate()
        .filter(|(_, &v)| v)
        .map(|(i, _)| geom.center_mm(i))
        .collect();
    if centres.is_empty() {
        return Err(Error::NoLesion);
    }
    if centres.len() == 1 {
        return Ok(Some(1.0));
    }
    let n = centres.len() as f64;
    let mut mean = [0.0; 3];
    for c in &centres {
        for a in 0..3 {
            mean[a] += c[a] / n;
        }
    }
    let mut cov = Matrix3::<f64>::zeros();
    for c in &centres {
        let d = [0, 1, 2].map(|a| c[a] - mean[a]);
        for i in 0..3 {
            for j in 0..3 {
                cov[(i, j)] += d[i] * d[j] / n;
            }
        }
    }
    let eig = SymmetricEigen::new(cov).eigenvalues;
    let max = eig.max();
    let min = eig.min();
    if min < 1e-9 * max {
        Ok(None)
    } else {
        Ok(Some(max / min))
    }
}

/// Shape features of the whole mask, category unset. `n_components` counts
/// 26-connected components.
pub fn shape_features(mask: &Mask) -> Result<RadiomicFeatures> {
    let count = mask.count();
    if count == 0 {
        return Err(Error::NoLesion);
    }
    let mut flags = Vec::new();
    let volume_mm3 = count as f64 * mask.geometry().voxel_volume_mm3();
    let mesh = surface_mesh(mask);
    let area = mesh.area();

    let solidity = match convex_hull_volume(&mesh.vertices) {
        Ok(hull) => {
            let s = volume_mm3 / hull;
            if s > 1.0 {
                flags.push(FLAG_SOLIDITY_ABOVE_ONE.to_string());
            }
            s
        }
        Err(Error::Degenerate(_)) => {
            flags.push(FLAG_DEGENERATE_HULL.to_string());
            1.0
        }
        Err(e) => return Err(e),
    };

    let elong = elongation(mask)?;
    if count == 1 {
        flags.push(FLAG_SINGLE_VOXEL.to_string());
    } else if elong.is_none() {
        flags.push(FLAG_ELONGATION_INFINITE.to_string());
    }

    Ok(RadiomicFeatures {
        n_components: connected_components(mask, Connectivity::TwentySix).n_components,
        volume_cm3: volume_mm3 / 1000.0,
        surface_area_mm2: area,
        sphericity: sphericity(volume_mm3, area),
        solidity,
        compactness: compactness(volume_mm3, area),
        surface_to_volume: area / volume_mm3,
        elongation: elong,
        category: None,
        flags,
    })
}

/// Components, dominant-component features and category for one lesion mask.
#[derive(Debug, Clone)]
pub struct LesionAnalysis {
    pub components: ComponentSet,
    /// Features of the largest component, with `n_components` and `category`
    /// describing the whole mask.
    pub features: RadiomicFeatures,
}

pub fn analyze_lesion(mask: &Mask, connectivity: Connectivity) -> Result<LesionAnalysis> {
    let components = connected_components(mask, connectivity);
    if components.n_components == 0 {
        return Err(Error::NoLesion);
    }
    let dominant = if components.n_components == 1 {
        mask.clone()
    } else {
        components.component_mask(1)
    };
    let mut features = shape_features(&dominant)?;
    features.n_components = components.n_components;
    let decision = classify_category(&components, &features)?;
    features.category = Some(decision.category);
    if decision.rule_gap {
        features.flags.push(FLAG_RULE_GAP.to_string());
    }
    debug_assert!(features.volume_mm3() > 0.0);
    Ok(LesionAnalysis { components, features })
}
