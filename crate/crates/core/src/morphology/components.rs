use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Geometry, Mask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Connectivity {
    #[serde(rename = "6")]
    Six,
    #[serde(rename = "18")]
    Eighteen,
    #[default]
    #[serde(rename = "26")]
    TwentySix,
}

impl Connectivity {
    pub fn from_count(n: u32) -> Result<Self> {
        match n {
            6 => Ok(Connectivity::Six),
            18 => Ok(Connectivity::Eighteen),
            26 => Ok(Connectivity::TwentySix),
            other => Err(Error::Validation(format!(
                "connectivity must be 6, 18 or 26, got {other}"
            ))),
        }
    }

    fn max_manhattan(self) -> i32 {
        match self {
            Connectivity::Six => 1,
            Connectivity::Eighteen => 2,
            Connectivity::TwentySix => 3,
        }
    }

    /// Neighbour offsets that precede a voxel in raster order.
    fn backward_offsets(self) -> Vec<[i32; 3]> {
        let mut offsets = Vec::new();
        for dz in -1i32..=1 {
            for dy in -1i32..=1 {
                for dx in -1i32..=1 {
                    let l1 = dx.abs() + dy.abs() + dz.abs();
                    let before = dz < 0 || (dz == 0 && (dy < 0 || (dy == 0 && dx < 0)));
                    if l1 > 0 && l1 <= self.max_manhattan() && before {
                        offsets.push([dx, dy, dz]);
                    }
                }
            }
        }
        offsets
    }
}

/// Labelled connected components. Ids run `1..=n` in order of decreasing
/// size; ties go to the component containing the lowest linear voxel index.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentSet {
    pub geometry: Geometry,
    /// 0 for background, otherwise the component id.
    pub labels: Vec<u32>,
    pub n_components: usize,
    /// Indexed by `id - 1`.
    pub voxel_counts: Vec<usize>,
    pub component_volumes_cm3: Vec<f64>,
}

impl ComponentSet {
    pub fn total_voxels(&self) -> usize {
        self.voxel_counts.iter().sum()
    }

    pub fn total_volume_cm3(&self) -> f64 {
        self.component_volumes_cm3.iter().sum()
    }

    pub fn component_mask(&self, id: u32) -> Mask {
        Mask::new(
            self.geometry.clone(),
            self.labels.iter().map(|&l| l == id).collect(),
        )
        .expect("same geometry")
    }

    /// Fraction of total foreground held by the largest component.
    pub fn largest_fraction(&self) -> f64 {
        match self.voxel_counts.first() {
            Some(&largest) => largest as f64 / self.total_voxels() as f64,
            None => 0.0,
        }
    }
}

struct UnionFind {
    parent: Vec<u32>,
}

impl UnionFind {
    fn new() -> Self {
        UnionFind { parent: Vec::new() }
    }

    fn make(&mut self) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(id);
        id
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let grand = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = grand;
            x = grand;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) -> u32 {
        let (ra, rb) = (self.find(a), self.find(b));
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[hi as usize] = lo;
        lo
    }
}

pub fn connected_components(mask: &Mask, connectivity: Connectivity) -> ComponentSet {
    let geometry = mask.geometry().clone();
    let [nx, ny, nz] = geometry.dims;
    let data = mask.data();
    let offsets = connectivity.backward_offsets();
    const NONE: u32 = u32::MAX;
    let mut provisional = vec![NONE; data.len()];
    let mut uf = UnionFind::new();

    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let idx = geometry.index(x, y, z);
                if !data[idx] {
                    continue;
                }
                let mut current = NONE;
                for off in &offsets {
                    let (qx, qy, qz) = (x as i32 + off[0], y as i32 + off[1], z as i32 + off[2]);
                    if qx < 0 || qy < 0 || qz < 0 || qx >= nx as i32 || qy >= ny as i32 {
                        continue;
                    }
                    let q = geometry.index(qx as usize, qy as usize, qz as usize);
                    let label = provisional[q];
                    if label == NONE {
                        continue;
                    }
                    current = if current == NONE {
                        uf.find(label)
                    } else {
                        uf.union(current, label)
                    };
                }
                provisional[idx] = if current == NONE { uf.make() } else { current };
            }
        }
    }

    // Resolve roots, recording size and first voxel of each.
    let mut root_stats: std::collections::HashMap<u32, (usize, usize)> = Default::default();
    for (idx, label) in provisional.iter_mut().enumerate() {
        if *label == NONE {
            continue;
        }
        let root = uf.find(*label);
        *label = root;
        let entry = root_stats.entry(root).or_insert((0, idx));
        entry.0 += 1;
    }
    let mut roots: Vec<(u32, usize, usize)> = root_stats
        .into_iter()
        .map(|(root, (count, first))| (root, count, first))
        .collect();
    roots.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
    let final_id: std::collections::HashMap<u32, u32> = roots
        .iter()
        .enumerate()
        .map(|(i, r)| (r.0, i as u32 + 1))
        .collect();
    let labels = provisional
        .into_iter()
        .map(|l| if l == NONE { 0 } else { final_id[&l] })
        .collect();
    let voxel_cm3 = geometry.voxel_volume_mm3() / 1000.0;
    let voxel_counts: Vec<usize> = roots.iter().map(|r| r.1).collect();
    ComponentSet {
        n_components: roots.len(),
        component_volumes_cm3: voxel_counts.iter().map(|&c| c as f64 * voxel_cm3).collect(),
        voxel_counts,
        labels,
        geometry,
    }
}
