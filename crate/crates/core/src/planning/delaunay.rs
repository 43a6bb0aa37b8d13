use nalgebra::Vector2;
use std::collections::HashMap;

use super::PlanningError;
use crate::geometry::ConeClass;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vertex {
    pub position: Vector2<f64>,
    pub class: ConeClass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    /// Belongs to exactly one triangle.
    pub boundary: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Triangulation {
    pub vertices: Vec<Vertex>,
    /// Counter-clockwise index triples into `vertices`.
    pub triangles: Vec<[usize; 3]>,
    pub edges: Vec<Edge>,
}

fn orient(a: Vector2<f64>, b: Vector2<f64>, c: Vector2<f64>) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

/// In-circle determinant for a counter-clockwise triangle: positive when `d`
/// lies strictly inside the circumcircle.
pub fn in_circle(a: Vector2<f64>, b: Vector2<f64>, c: Vector2<f64>, d: Vector2<f64>) -> f64 {
    let (adx, ady) = (a.x - d.x, a.y - d.y);
    let (bdx, bdy) = (b.x - d.x, b.y - d.y);
    let (cdx, cdy) = (c.x - d.x, c.y - d.y);
    let ad = adx * adx + ady * ady;
    let bd = bdx * bdx + bdy * bdy;
    let cd = cdx * cdx + cdy * cdy;
    adx * (bdy * cd - bd * cdy) - ady * (bdx * cd - bd * cdx) + ad * (bdx * cdy - bdy * cdx)
}

/// Scale used to make the in-circle tolerance relative.
fn in_circle_scale(a: Vector2<f64>, b: Vector2<f64>, c: Vector2<f64>, d: Vector2<f64>) -> f64 {
    let m = [a - d, b - d, c - d].iter().fold(0.0f64, |m, v| m.max(v.norm_squared()));
    m * m
}

/// True when `d` is strictly inside beyond the relative tolerance.
pub fn strictly_inside(a: Vector2<f64>, b: Vector2<f64>, c: Vector2<f64>, d: Vector2<f64>, rel_tol: f64) -> bool {
    in_circle(a, b, c, d) > rel_tol * in_circle_scale(a, b, c, d)
}

const IN_CIRCLE_TOL: f64 = 1e-9;

/// Triangles to remove when inserting `p`: grown from the triangle holding
/// `p` through neighbours whose circumcircle contains it, then trimmed until
/// every cavity edge faces `p`. Near-cocircular input otherwise yields a
/// cavity that is disconnected or not star-shaped.
fn cavity(all: &[Vector2<f64>], tris: &[[usize; 3]], p: Vector2<f64>) -> Vec<usize> {
    let mut by_edge: HashMap<(usize, usize), usize> = HashMap::with_capacity(tris.len() * 3);
    for (k, t) in tris.iter().enumerate() {
        for e in 0..3 {
            by_edge.insert((t[e], t[(e + 1) % 3]), k);
        }
    }
    let contains = |t: &[usize; 3]| (0..3).all(|e| orient(all[t[e]], all[t[(e + 1) % 3]], p) >= 0.0);
    let Some(seed) = tris.iter().position(contains) else {
        return Vec::new();
    };
    let mut bad = vec![seed];
    let mut stack = vec![seed];
    while let Some(k) = stack.pop() {
        let t = tris[k];
        for e in 0..3 {
            if let Some(&n) = by_edge.get(&(t[(e + 1) % 3], t[e])) {
                let u = tris[n];
                if !bad.contains(&n) && strictly_inside(all[u[0]], all[u[1]], all[u[2]], p, 0.0) {
                    bad.push(n);
                    stack.push(n);
                }
            }
        }
    }
    loop {
        let drop = bad.iter().skip(1).position(|&k| {
            let t = tris[k];
            (0..3).any(|e| {
                let (a, b) = (t[e], t[(e + 1) % 3]);
                let shared = by_edge.get(&(b, a)).is_some_and(|n| bad.contains(n));
                !shared && orient(all[a], all[b], p) <= 0.0
            })
        });
        match drop {
            Some(i) => {
                bad.remove(i + 1);
            }
            None => return bad,
        }
    }
}

/// Bowyer–Watson with a super-triangle. Points are inserted in `(x, y)`
/// order; exact duplicates are skipped and stay unconnected.
pub fn delaunay_triangulate(cones: &[(f64, f64, ConeClass)]) -> Result<Triangulation, PlanningError> {
    if cones.len() < 3 {
        return Err(PlanningError::DegenerateInput(format!("{} points, need at least 3", cones.len())));
    }
    let vertices: Vec<Vertex> = cones
        .iter()
        .map(|&(x, y, class)| Vertex {
            position: Vector2::new(x, y),
            class,
        })
        .collect();
    let pts: Vec<Vector2<f64>> = vertices.iter().map(|v| v.position).collect();

    let (mut min, mut max) = (pts[0], pts[0]);
    for p in &pts {
        min = min.inf(p);
        max = max.sup(p);
    }
    let extent = (max - min).amax().max(1e-6);
    let collinear = {
        let a = pts[0];
        let far = pts.iter().copied().max_by(|p, q| (p - a).norm().total_cmp(&(q - a).norm())).unwrap();
        let dir = far - a;
        dir.norm() < 1e-12 || pts.iter().all(|&p| orient(a, far, p).abs() <= 1e-12 * dir.norm() * extent)
    };
    if collinear {
        return Err(PlanningError::DegenerateInput("all points are collinear".into()));
    }

    // super-triangle vertices are appended after the input vertices
    let n = pts.len();
    let mid = (min + max) / 2.0;
    let big = extent * 100.0;
    let mut all = pts.clone();
    all.push(mid + Vector2::new(-2.0 * big, -big));
    all.push(mid + Vector2::new(2.0 * big, -big));
    all.push(mid + Vector2::new(0.0, 2.0 * big));
    let mut tris: Vec<[usize; 3]> = vec![[n, n + 1, n + 2]];

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| pts[i].x.total_cmp(&pts[j].x).then(pts[i].y.total_cmp(&pts[j].y)));
    let mut inserted: Vec<usize> = Vec::with_capacity(n);

    for &i in &order {
        let p = all[i];
        if inserted.iter().any(|&j| (all[j] - p).norm() < 1e-12) {
            log::debug!("skipping duplicate vertex {i}");
            continue;
        }
        let bad = cavity(&all, &tris, p);
        let mut keep = Vec::with_capacity(tris.len());
        let bad: Vec<[usize; 3]> = tris
            .drain(..)
            .enumerate()
            .filter_map(|(k, t)| {
                if bad.contains(&k) {
                    Some(t)
                } else {
                    keep.push(t);
                    None
                }
            })
            .collect();
        tris = keep;
        // cavity boundary: edges of bad triangles not shared by another bad triangle
        let mut count: HashMap<(usize, usize), (usize, usize, usize)> = HashMap::new();
        for t in &bad {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                count.entry(key).and_modify(|e| e.2 += 1).or_insert((a, b, 1));
            }
        }
        let mut boundary: Vec<(usize, usize)> = count.values().filter(|e| e.2 == 1).map(|e| (e.0, e.1)).collect();
        boundary.sort_unstable();
        for (a, b) in boundary {
            tris.push([a, b, i]);
        }
        inserted.push(i);
    }

    tris.retain(|t| t.iter().all(|&v| v < n));
    for t in &mut tris {
        if orient(all[t[0]], all[t[1]], all[t[2]]) < 0.0 {
            t.swap(1, 2);
        }
    }
    tris.sort_unstable();

    let mut edge_count: HashMap<(usize, usize), usize> = HashMap::new();
    for t in &tris {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            *edge_count.entry((a.min(b), a.max(b))).or_default() += 1;
        }
    }
    let mut edges: Vec<Edge> = edge_count
        .into_iter()
        .map(|((a, b), c)| Edge { a, b, boundary: c == 1 })
        .collect();
    edges.sort_unstable_by_key(|e| (e.a, e.b));

    Ok(Triangulation {
        vertices,
        triangles: tris,
        edges,
    })
}

impl Triangulation {
    /// Brute-force empty-circumcircle check. Returns the first offending
    /// `(triangle, vertex)` pair, if any.
    pub fn find_delaunay_violation(&self) -> Option<(usize, usize)> {
        for (ti, t) in self.triangles.iter().enumerate() {
            let (a, b, c) = (
                self.vertices[t[0]].position,
                self.vertices[t[1]].position,
                self.vertices[t[2]].position,
            );
            for (vi, v) in self.vertices.iter().enumerate() {
                if t.contains(&vi) {
                    continue;
                }
                if strictly_inside(a, b, c, v.position, IN_CIRCLE_TOL) {
                    return Some((ti, vi));
                }
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unit_square() {
        let b = ConeClass::Blue;
        let t = delaunay_triangulate(&[(0.0, 0.0, b), (1.0, 0.0, b), (1.0, 1.0, b), (0.0, 1.0, b)]).unwrap();
        assert_eq!(t.triangles.len(), 2);
        assert_eq!(t.edges.len(), 5);
        assert_eq!(t.edges.iter().filter(|e| e.boundary).count(), 4);
    }

    #[test]
    fn collinear_and_tiny_inputs_fail() {
        let b = ConeClass::Blue;
        assert!(matches!(
            delaunay_triangulate(&[(0.0, 0.0, b), (1.0, 1.0, b), (2.0, 2.0, b)]),
            Err(PlanningError::DegenerateInput(_))
        ));
        assert!(delaunay_triangulate(&[(0.0, 0.0, b), (1.0, 1.0, b)]).is_err());
    }

    #[test]
    fn random_sets_are_delaunay() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let cones: Vec<_> = (0..50)
                .map(|_| (rng.gen_range(-30.0..30.0), rng.gen_range(-30.0..30.0), ConeClass::Yellow))
                .collect();
            let t = delaunay_triangulate(&cones).unwrap();
            assert_eq!(t.find_delaunay_violation(), None);
            // Euler: T = 2n - 2 - h for points in general position
            let hull = t.edges.iter().filter(|e| e.boundary).count();
            assert_eq!(t.triangles.len(), 2 * 50 - 2 - hull);
        }
    }

    #[test]
    fn deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cones: Vec<_> = (0..30).map(|_| (rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0), ConeClass::Blue)).collect();
        assert_eq!(delaunay_triangulate(&cones).unwrap(), delaunay_triangulate(&cones).unwrap());
    }

    #[test]
    fn concentric_rings() {
        let mut cones = Vec::new();
        for (cx, r) in [(-9.125, 7.625), (-9.125, 10.625), (9.125, 7.625), (9.125, 10.625)] {
            for k in 0..16 {
                let a = k as f64 * std::f64::consts::TAU / 16.0;
                cones.push((cx + r * a.cos(), r * a.sin(), ConeClass::Blue));
            }
        }
        let t = delaunay_triangulate(&cones).unwrap();
        assert!(t.triangles.len() <= 2 * cones.len() - 5);
        assert_eq!(t.find_delaunay_violation(), None);
    }
}
