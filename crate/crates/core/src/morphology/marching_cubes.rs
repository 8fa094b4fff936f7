use std::collections::HashMap;

use super::mc_tables::{CORNERS, EDGE_CONNECTION, TRIANGLE_CONNECTION};
use crate::error::{Error, Result};
use crate::grid::Mask;

pub const TAUBIN_LAMBDA: f64 = 0.5;
pub const TAUBIN_MU: f64 = -0.6;
pub const TAUBIN_ITERATIONS: usize = 10;

/// Closed polygonal surface in millimetres (voxel index times spacing).
///
/// Each polygon is the oriented loop where the surface crosses the faces of
/// one marching-cubes cell. Area and volume are taken over fans around each
/// loop's centroid rather than over the table's triangles, so they do not
/// depend on which diagonal the table uses to split a polygon and commute
/// with axis permutations.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<[f64; 3]>,
    pub polygons: Vec<Vec<u32>>,
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

fn mean_of(vertices: &[[f64; 3]], ids: impl ExactSizeIterator<Item = usize>) -> [f64; 3] {
    let n = ids.len() as f64;
    let mut s = [0.0; 3];
    for i in ids {
        for a in 0..3 {
            s[a] += vertices[i][a];
        }
    }
    s.map(|x| x / n)
}

impl Mesh {
    pub fn is_empty(&self) -> bool {
        self.polygons.is_empty()
    }

    /// Fan triangles `(centroid, v_i, v_{i+1})` of every polygon.
    fn fans(&self) -> impl Iterator<Item = (usize, [[f64; 3]; 3])> + '_ {
        self.polygons.iter().enumerate().flat_map(move |(p, poly)| {
            let c = mean_of(&self.vertices, poly.iter().map(|&v| v as usize));
            (0..poly.len()).map(move |i| {
                let a = self.vertices[poly[i] as usize];
                let b = self.vertices[poly[(i + 1) % poly.len()] as usize];
                (p, [c, a, b])
            })
        })
    }

    pub fn area(&self) -> f64 {
        self.fans()
            .map(|(_, [c, a, b])| 0.5 * norm(cross(sub(a, c), sub(b, c))))
            .sum()
    }

    fn signed_volume_where(&self, origin: [f64; 3], keep: impl Fn(usize) -> bool) -> f64 {
        self.fans()
            .filter(|(p, _)| keep(*p))
            .map(|(_, t)| {
                let [c, a, b] = t.map(|v| sub(v, origin));
                dot(c, cross(a, b)) / 6.0
            })
            .sum()
    }

    pub fn signed_volume(&self) -> f64 {
        self.signed_volume_where([0.0; 3], |_| true)
    }

    /// Triangulation for export: each polygon fanned from its first vertex.
    pub fn triangles(&self) -> Vec<[u32; 3]> {
        self.polygons
            .iter()
            .flat_map(|p| (1..p.len() - 1).map(move |i| [p[0], p[i], p[i + 1]]))
            .collect()
    }

    fn neighbours(&self) -> Vec<Vec<u32>> {
        let mut adj = vec![Vec::new(); self.vertices.len()];
        for poly in &self.polygons {
            for i in 0..poly.len() {
                let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
                adj[a as usize].push(b);
                adj[b as usize].push(a);
            }
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        adj
    }

    /// Component id per vertex and per polygon, following polygon edges.
    fn components(&self) -> (Vec<usize>, Vec<usize>, usize) {
        let n = self.vertices.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for poly in &self.polygons {
            for w in poly.windows(2) {
                let a = find(&mut parent, w[0] as usize);
                let b = find(&mut parent, w[1] as usize);
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
        let mut ids = HashMap::new();
        let vertex_comp: Vec<usize> = (0..n)
            .map(|v| {
                let root = find(&mut parent, v);
                let next = ids.len();
                *ids.entry(root).or_insert(next)
            })
            .collect();
        let poly_comp = self.polygons.iter().map(|p| vertex_comp[p[0] as usize]).collect();
        (vertex_comp, poly_comp, ids.len())
    }

    /// Taubin lambda/mu smoothing followed by a per-component rescale about the
    /// component centroid that restores each component's enclosed volume.
    pub fn taubin_smoothed(&self, lambda: f64, mu: f64, iterations: usize) -> Mesh {
        let adj = self.neighbours();
        let step = |verts: &[[f64; 3]], factor: f64| -> Vec<[f64; 3]> {
            verts
                .iter()
                .enumerate()
                .map(|(i, &v)| {
                    if adj[i].is_empty() {
                        return v;
                    }
                    let m = mean_of(verts, adj[i].iter().map(|&j| j as usize));
                    [0, 1, 2].map(|a| v[a] + factor * (m[a] - v[a]))
                })
                .collect()
        };
        let mut verts = self.vertices.clone();
        for _ in 0..iterations {
            verts = step(&verts, lambda);
            verts = step(&verts, mu);
        }
        let mut smoothed = Mesh { vertices: verts, polygons: self.polygons.clone() };

        let (vertex_comp, poly_comp, n_comp) = self.components();
        for c in 0..n_comp {
            let members: Vec<usize> = (0..vertex_comp.len()).filter(|&v| vertex_comp[v] == c).collect();
            let c_raw = mean_of(&self.vertices, members.iter().copied());
            let c_new = mean_of(&smoothed.vertices, members.iter().copied());
            let v_raw = self.signed_volume_where(c_raw, |p| poly_comp[p] == c);
            let v_new = smoothed.signed_volume_where(c_new, |p| poly_comp[p] == c);
            let ratio = v_raw / v_new;
            if !(ratio.is_finite() && ratio > 0.0) {
                // Collapsed component: keep the unsmoothed vertices.
                for &v in &members {
                    smoothed.vertices[v] = self.vertices[v];
                }
                continue;
            }
            let s = ratio.cbrt();
            for &v in &members {
                let p = smoothed.vertices[v];
                smoothed.vertices[v] = [0, 1, 2].map(|a| c_new[a] + (p[a] - c_new[a]) * s);
            }
        }
        smoothed
    }
}

/// Raw marching-cubes surface of a binary mask at level 0.5. The volume is
/// padded by one background voxel on every side so the surface is closed, and
/// vertices are shared between neighbouring cells.
pub fn extract_surface(mask: &Mask) -> Mesh {
    let geom = mask.geometry();
    let [nx, ny, nz] = geom.dims;
    let spacing = geom.spacing;
    let data = mask.data();

    let mut lo = [usize::MAX; 3];
    let mut hi = [0usize; 3];
    let mut any = false;
    for (i, &v) in data.iter().enumerate() {
        if v {
            any = true;
            let c = geom.coords(i);
            for a in 0..3 {
                lo[a] = lo[a].min(c[a]);
                hi[a] = hi[a].max(c[a]);
            }
        }
    }
    if !any {
        return Mesh::default();
    }

    let inside = |p: [i64; 3]| -> bool {
        if p.iter().any(|&c| c < 0) || p[0] >= nx as i64 || p[1] >= ny as i64 || p[2] >= nz as i64 {
            return false;
        }
        data[geom.index(p[0] as usize, p[1] as usize, p[2] as usize)]
    };
    // Key for the edge leaving grid point `p` along `axis`; points are shifted
    // by one to cover the padding.
    let stride = [1u64, nx as u64 + 2, (nx as u64 + 2) * (ny as u64 + 2)];
    let edge_key = |p: [i64; 3], axis: usize| -> u64 {
        let lin: u64 = (0..3).map(|a| (p[a] + 1) as u64 * stride[a]).sum();
        lin * 3 + axis as u64
    };

    let mut mesh = Mesh::default();
    let mut lookup: HashMap<u64, u32> = HashMap::new();
    let mut directed: Vec<(u32, u32)> = Vec::with_capacity(12);
    for cz in lo[2] as i64 - 1..=hi[2] as i64 {
        for cy in lo[1] as i64 - 1..=hi[1] as i64 {
            for cx in lo[0] as i64 - 1..=hi[0] as i64 {
                let corner = |k: usize| {
                    [cx + CORNERS[k][0] as i64, cy + CORNERS[k][1] as i64, cz + CORNERS[k][2] as i64]
                };
                let mut cube_index = 0usize;
                for k in 0..8 {
                    if inside(corner(k)) {
                        cube_index |= 1 << k;
                    }
                }
                if cube_index == 0 || cube_index == 255 {
                    continue;
                }
                let row = &TRIANGLE_CONNECTION[cube_index];
                let ids: Vec<u32> = row
                    .iter()
                    .take_while(|&&e| e >= 0)
                    .map(|&edge| {
                        let [ka, kb] = EDGE_CONNECTION[edge as usize];
                        let (pa, pb) = (corner(ka), corner(kb));
                        let axis = (0..3).find(|&a| pa[a] != pb[a]).expect("edge spans one axis");
                        let base = if pa[axis] < pb[axis] { pa } else { pb };
                        *lookup.entry(edge_key(base, axis)).or_insert_with(|| {
                            let mut pos = base.map(|c| c as f64);
                            pos[axis] += 0.5;
                            mesh.vertices.push([0, 1, 2].map(|a| pos[a] * spacing[a]));
                            (mesh.vertices.len() - 1) as u32
                        })
                    })
                    .collect();

                // Triangle edges whose reverse is absent in this cell bound the
                // cell's polygons; chain them into loops.
                directed.clear();
                for t in ids.chunks(3) {
                    for k in 0..3 {
                        directed.push((t[k], t[(k + 1) % 3]));
                    }
                }
                let mut next: HashMap<u32, u32> = directed
                    .iter()
                    .filter(|&&(a, b)| !directed.contains(&(b, a)))
                    .copied()
                    .collect();
                while let Some(&start) = next.keys().min() {
                    let mut poly = vec![start];
                    let mut v = next.remove(&start).expect("present");
                    while v != start {
                        poly.push(v);
                        v = next.remove(&v).expect("boundary edges form closed loops");
                    }
                    // The table winds loops inward; store them outward.
                    poly.reverse();
                    mesh.polygons.push(poly);
                }
            }
        }
    }
    mesh
}

/// Marching-cubes surface with Taubin smoothing and volume restoration.
pub fn surface_mesh(mask: &Mask) -> Mesh {
    extract_surface(mask).taubin_smoothed(TAUBIN_LAMBDA, TAUBIN_MU, TAUBIN_ITERATIONS)
}

/// Surface area in mm² of the smoothed isosurface.
pub fn surface_area(mask: &Mask) -> Result<f64> {
    let mesh = surface_mesh(mask);
    if mesh.is_empty() {
        return Err(Error::Degenerate("surface area of an empty mask".into()));
    }
    Ok(mesh.area())
}
