use std::collections::HashMap;

use crate::error::{Error, Result};

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

struct Face {
    v: [usize; 3],
    normal: [f64; 3],
    offset: f64,
    outside: Vec<usize>,
    alive: bool,
}

impl Face {
    fn distance(&self, p: [f64; 3]) -> f64 {
        dot(self.normal, p) - self.offset
    }
}

/// Convex hull as a list of outward-oriented triangles over `points`.
pub struct ConvexHull {
    pub points: Vec<[f64; 3]>,
    pub faces: Vec<[usize; 3]>,
    interior: [f64; 3],
}

impl ConvexHull {
    pub fn volume(&self) -> f64 {
        let c = self.interior;
        self.faces
            .iter()
            .map(|f| {
                let [a, b, d] = f.map(|i| sub(self.points[i], c));
                dot(a, cross(b, d)) / 6.0
            })
            .sum()
    }
}

/// Quickhull. Fails with `Degenerate` for fewer than four points or a
/// coplanar set.
pub fn convex_hull(points: &[[f64; 3]]) -> Result<ConvexHull> {
    if points.len() < 4 {
        return Err(Error::Degenerate(format!("convex hull needs 4 points, got {}", points.len())));
    }
    let mut lo = points[0];
    let mut hi = points[0];
    for p in points {
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let extent = (0..3).map(|a| hi[a] - lo[a]).fold(0.0, f64::max);
    if extent == 0.0 || !extent.is_finite() {
        return Err(Error::Degenerate("convex hull of coincident points".into()));
    }
    let eps = 1e-10 * extent;

    // Initial simplex: extremes along the widest axis, then farthest from the
    // line, then farthest from the plane.
    let axis = (0..3).max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b]))).unwrap();
    let argmin = (0..points.len()).min_by(|&i, &j| points[i][axis].total_cmp(&points[j][axis])).unwrap();
    let argmax = (0..points.len()).max_by(|&i, &j| points[i][axis].total_cmp(&points[j][axis])).unwrap();
    let (p0, p1) = (argmin, argmax);
    let dir = sub(points[p1], points[p0]);
    let line_dist = |i: usize| {
        let c = cross(dir, sub(points[i], points[p0]));
        dot(c, c)
    };
    let p2 = (0..points.len()).max_by(|&i, &j| line_dist(i).total_cmp(&line_dist(j))).unwrap();
    if line_dist(p2).sqrt() / dot(dir, dir).sqrt() <= eps {
        return Err(Error::Degenerate("convex hull of collinear points".into()));
    }
    let plane_n = cross(dir, sub(points[p2], points[p0]));
    let plane_len = dot(plane_n, plane_n).sqrt();
    let plane_dist = |i: usize| dot(plane_n, sub(points[i], points[p0])) / plane_len;
    let p3 = (0..points.len()).max_by(|&i, &j| plane_dist(i).abs().total_cmp(&plane_dist(j).abs())).unwrap();
    if plane_dist(p3).abs() <= eps {
        return Err(Error::Degenerate("convex hull of coplanar points".into()));
    }
    let simplex = [p0, p1, p2, p3];
    let interior = {
        let mut s = [0.0; 3];
        for &i in &simplex {
            for a in 0..3 {
                s[a] += points[i][a] / 4.0;
            }
        }
        s
    };

    let mut faces: Vec<Face> = Vec::new();
    let mut edges: HashMap<(usize, usize), usize> = HashMap::new();
    let make_face = |v: [usize; 3]| -> Face {
        let mut v = v;
        let mut n = cross(sub(points[v[1]], points[v[0]]), sub(points[v[2]], points[v[0]]));
        if dot(n, sub(interior, points[v[0]])) > 0.0 {
            v.swap(1, 2);
            n = n.map(|x| -x);
        }
        let len = dot(n, n).sqrt();
        let normal = n.map(|x| x / len);
        Face { offset: dot(normal, points[v[0]]), normal, v, outside: Vec::new(), alive: true }
    };
    let register = |faces: &mut Vec<Face>, edges: &mut HashMap<(usize, usize), usize>, f: Face| {
        let id = faces.len();
        for k in 0..3 {
            edges.insert((f.v[k], f.v[(k + 1) % 3]), id);
        }
        faces.push(f);
        id
    };
    for skip in 0..4 {
        let v: Vec<usize> = (0..4).filter(|&k| k != skip).map(|k| simplex[k]).collect();
        let f = make_face([v[0], v[1], v[2]]);
        register(&mut faces, &mut edges, f);
    }
    for i in 0..points.len() {
        if simplex.contains(&i) {
            continue;
        }
        if let Some(f) = (0..4).find(|&f| faces[f].distance(points[i]) > eps) {
            faces[f].outside.push(i);
        }
    }

    let mut stack: Vec<usize> = (0..4).collect();
    while let Some(fid) = stack.pop() {
        if !faces[fid].alive || faces[fid].outside.is_empty() {
            continue;
        }
        let apex = *faces[fid]
            .outside
            .iter()
            .max_by(|&&a, &&b| faces[fid].distance(points[a]).total_cmp(&faces[fid].distance(points[b])))
            .unwrap();
        let p = points[apex];

        // Flood the faces visible from the apex.
        let mut visible = vec![fid];
        let mut is_visible: HashMap<usize, bool> = HashMap::from([(fid, true)]);
        let mut cursor = 0;
        while cursor < visible.len() {
            let f = visible[cursor];
            cursor += 1;
            for k in 0..3 {
                let (a, b) = (faces[f].v[k], faces[f].v[(k + 1) % 3]);
                let nb = edges[&(b, a)];
                if is_visible.contains_key(&nb) {
                    continue;
                }
                let vis = faces[nb].distance(p) > eps;
                is_visible.insert(nb, vis);
                if vis {
                    visible.push(nb);
                }
            }
        }

        let mut horizon = Vec::new();
        let mut orphans = Vec::new();
        for &f in &visible {
            for k in 0..3 {
                let (a, b) = (faces[f].v[k], faces[f].v[(k + 1) % 3]);
                if !is_visible[&edges[&(b, a)]] {
                    horizon.push((a, b));
                }
            }
            faces[f].alive = false;
            orphans.append(&mut faces[f].outside);
        }
        for &f in &visible {
            for k in 0..3 {
                let key = (faces[f].v[k], faces[f].v[(k + 1) % 3]);
                if edges.get(&key) == Some(&f) {
                    edges.remove(&key);
                }
            }
        }
        let mut new_faces = Vec::with_capacity(horizon.len());
        for (a, b) in horizon {
            let mut n = cross(sub(points[b], points[a]), sub(p, points[a]));
            let len = dot(n, n).sqrt();
            n = n.map(|x| x / len);
            let face = Face { v: [a, b, apex], offset: dot(n, points[a]), normal: n, outside: Vec::new(), alive: true };
            new_faces.push(register(&mut faces, &mut edges, face));
        }
        for q in orphans {
            if q == apex {
                continue;
            }
            let best = new_faces
                .iter()
                .copied()
                .map(|f| (f, faces[f].distance(points[q])))
                .filter(|&(_, d)| d > eps)
                .max_by(|a, b| a.1.total_cmp(&b.1));
            if let Some((f, _)) = best {
                faces[f].outside.push(q);
            }
        }
        stack.extend(new_faces);
    }

    Ok(ConvexHull {
        points: points.to_vec(),
        faces: faces.iter().filter(|f| f.alive).map(|f| f.v).collect(),
        interior,
    })
}

pub fn convex_hull_volume(points: &[[f64; 3]]) -> Result<f64> {
    Ok(convex_hull(points)?.volume())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn cube_corners() -> Vec<[f64; 3]> {
        let mut v = Vec::new();
        for i in 0..8 {
            v.push([(i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64]);
        }
        v
    }

    #[test]
    fn unit_cube() {
        assert!((convex_hull_volume(&cube_corners()).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cube_with_interior_and_face_points() {
        let mut pts = cube_corners();
        pts.extend([[0.5, 0.5, 0.5], [0.5, 0.5, 0.0], [0.2, 0.7, 1.0], [1.0, 0.3, 0.3]]);
        assert!((convex_hull_volume(&pts).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn octahedron() {
        let pts = [
            [1.0, 0.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 1.0, 0.0],
            [0.0, -1.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, -1.0],
        ];
        assert!((convex_hull_volume(&pts).unwrap() - 4.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn lattice_points_of_a_box() {
        let mut pts = Vec::new();
        for x in 0..5 {
            for y in 0..4 {
                for z in 0..3 {
                    pts.push([x as f64, y as f64, z as f64]);
                }
            }
        }
        assert!((convex_hull_volume(&pts).unwrap() - 24.0).abs() < 1e-9);
    }

    #[test]
    fn points_on_sphere() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let pts: Vec<[f64; 3]> = (0..4000)
            .map(|_| {
                let (u, v): (f64, f64) = (rng.random_range(-1.0..1.0), rng.random_range(0.0..std::f64::consts::TAU));
                let s = (1.0 - u * u).sqrt();
                [s * v.cos(), s * v.sin(), u]
            })
            .collect();
        let vol = convex_hull_volume(&pts).unwrap();
        let sphere = 4.0 / 3.0 * std::f64::consts::PI;
        assert!(vol < sphere && vol > 0.98 * sphere, "{vol}");
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(convex_hull_volume(&[[0.0; 3]; 3]), Err(Error::Degenerate(_))));
        let flat: Vec<[f64; 3]> = (0..10).map(|i| [i as f64, (i * i) as f64, 0.0]).collect();
        assert!(matches!(convex_hull_volume(&flat), Err(Error::Degenerate(_))));
    }

    proptest! {
        #[test]
        fn every_point_inside_hull(pts in prop::collection::vec(prop::array::uniform3(-10.0f64..10.0), 4..60)) {
            let hull = match convex_hull(&pts) {
                Ok(h) => h,
                Err(_) => return Ok(()),
            };
            for f in &hull.faces {
                let [a, b, c] = f.map(|i| pts[i]);
                let n = cross(sub(b, a), sub(c, a));
                let len = dot(n, n).sqrt();
                for p in &pts {
                    prop_assert!(dot(n, sub(*p, a)) / len <= 1e-7);
                }
            }
            prop_assert!(hull.volume() > 0.0);
        }
    }
}
