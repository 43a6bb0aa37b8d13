use nalgebra::Vector2;

use super::delaunay::Triangulation;
use super::path::{SpeedProfile, WaypointPath};
use super::PlanningError;
use crate::geometry::{ConeClass, Pose2D};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MidlineConfig {
    /// Cone-to-cone edges longer than this are treated as cross-track artifacts.
    pub max_edge_length: f64,
    /// Largest gap bridged while chaining midpoints.
    pub max_step: f64,
    /// Spline samples per midpoint interval.
    pub samples_per_segment: usize,
    /// Naive baseline: largest blue-to-yellow pairing distance.
    pub pairing_threshold: f64,
    pub speed: SpeedProfile,
}

impl Default for MidlineConfig {
    fn default() -> Self {
        Self {
            max_edge_length: 7.0,
            max_step: 6.0,
            samples_per_segment: 3,
            pairing_threshold: 6.0,
            speed: SpeedProfile::default(),
        }
    }
}

/// Midpoints of blue–yellow edges within the length limit.
pub fn midpoints(tri: &Triangulation, config: &MidlineConfig) -> Vec<Vector2<f64>> {
    tri.edges
        .iter()
        .filter_map(|e| {
            let (a, b) = (&tri.vertices[e.a], &tri.vertices[e.b]);
            let pair = matches!(
                (a.class, b.class),
                (ConeClass::Blue, ConeClass::Yellow) | (ConeClass::Yellow, ConeClass::Blue)
            );
            let len = (a.position - b.position).norm();
            (pair && len <= config.max_edge_length).then(|| (a.position + b.position) / 2.0)
        })
        .collect()
}

fn segments_cross(p1: Vector2<f64>, p2: Vector2<f64>, q1: Vector2<f64>, q2: Vector2<f64>) -> bool {
    let cross = |o: Vector2<f64>, a: Vector2<f64>, b: Vector2<f64>| (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
    let d1 = cross(q1, q2, p1);
    let d2 = cross(q1, q2, p2);
    let d3 = cross(p1, p2, q1);
    let d4 = cross(p1, p2, q2);
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

/// Nearest-neighbour chaining from the start pose. Only points ahead of the
/// current travel direction are eligible, and a step may not cross an
/// already accepted segment. Returns the ordered points and whether the chain
/// closes back onto its first point.
///
/// When nothing lies within `max_step`, one step of up to twice that is
/// allowed if it keeps close to the travel direction. The first and the
/// closing step get the same allowance. This bridges a start gate lined with
/// orange cones, which yields no blue–yellow midpoints.
pub fn chain_points(points: &[Vector2<f64>], start: &Pose2D, max_step: f64) -> (Vec<Vector2<f64>>, bool) {
    let mut used = vec![false; points.len()];
    let mut chain: Vec<Vector2<f64>> = Vec::new();
    let mut here = start.position();
    let mut dir = Vector2::new(start.heading.cos(), start.heading.sin());
    loop {
        let nearest = |used: &mut [bool], chain: &[Vector2<f64>], limit: f64, min_cos: f64| {
            let mut best: Option<(usize, f64)> = None;
            for (i, p) in points.iter().enumerate() {
                if used[i] {
                    continue;
                }
                let d = p - here;
                let dist = d.norm();
                if dist < 1e-9 {
                    used[i] = true;
                    continue;
                }
                if dist > limit || d.dot(&dir) <= min_cos * dist {
                    continue;
                }
                let crosses = chain.windows(2).rev().skip(1).any(|w| segments_cross(here, *p, w[0], w[1]));
                if crosses {
                    continue;
                }
                if best.map_or(true, |(_, bd)| dist < bd) {
                    best = Some((i, dist));
                }
            }
            best
        };
        let best = if chain.is_empty() {
            nearest(&mut used, &chain, 2.0 * max_step, 0.2)
        } else {
            nearest(&mut used, &chain, max_step, 0.2).or_else(|| nearest(&mut used, &chain, 2.0 * max_step, 0.9))
        };
        let Some((i, _)) = best else { break };
        used[i] = true;
        let p = points[i];
        if !chain.is_empty() {
            dir = (p - here).normalize();
        }
        chain.push(p);
        here = p;
    }
    let closed = chain.len() >= 8 && {
        let gap = chain[0] - chain[chain.len() - 1];
        let length: f64 = chain.windows(2).map(|w| (w[1] - w[0]).norm()).sum();
        gap.norm() <= 2.0 * max_step && gap.dot(&dir) > 0.0 && length > 4.0 * max_step
    };
    (chain, closed)
}

/// Centripetal Catmull–Rom through `knots`, `samples` points per interval.
pub fn catmull_rom(knots: &[Vector2<f64>], closed: bool, samples: usize) -> Vec<Vector2<f64>> {
    let n = knots.len();
    if n < 3 || samples <= 1 {
        return knots.to_vec();
    }
    let get = |i: isize| -> Vector2<f64> {
        if closed {
            knots[i.rem_euclid(n as isize) as usize]
        } else if i < 0 {
            knots[0] * 2.0 - knots[1]
        } else if i as usize >= n {
            knots[n - 1] * 2.0 - knots[n - 2]
        } else {
            knots[i as usize]
        }
    };
    let intervals = if closed { n } else { n - 1 };
    let mut out = Vec::with_capacity(intervals * samples + 1);
    for seg in 0..intervals as isize {
        let (p0, p1, p2, p3) = (get(seg - 1), get(seg), get(seg + 1), get(seg + 2));
        let knot = |a: Vector2<f64>, b: Vector2<f64>| (b - a).norm().sqrt().max(1e-9);
        let t0 = 0.0;
        let t1 = t0 + knot(p0, p1);
        let t2 = t1 + knot(p1, p2);
        let t3 = t2 + knot(p2, p3);
        for k in 0..samples {
            let t = t1 + (t2 - t1) * k as f64 / samples as f64;
            let a1 = p0 * ((t1 - t) / (t1 - t0)) + p1 * ((t - t0) / (t1 - t0));
            let a2 = p1 * ((t2 - t) / (t2 - t1)) + p2 * ((t - t1) / (t2 - t1));
            let a3 = p2 * ((t3 - t) / (t3 - t2)) + p3 * ((t - t2) / (t3 - t2));
            let b1 = a1 * ((t2 - t) / (t2 - t0)) + a2 * ((t - t0) / (t2 - t0));
            let b2 = a2 * ((t3 - t) / (t3 - t1)) + a3 * ((t - t1) / (t3 - t1));
            out.push(b1 * ((t2 - t) / (t2 - t1)) + b2 * ((t - t1) / (t2 - t1)));
        }
    }
    if !closed {
        out.push(knots[n - 1]);
    }
    out
}

fn smooth_path(knots: Vec<Vector2<f64>>, closed: bool, config: &MidlineConfig) -> WaypointPath {
    let pts = catmull_rom(&knots, closed, config.samples_per_segment);
    WaypointPath::new(pts, closed, &config.speed)
}

/// Delaunay midline: blue–yellow edge midpoints chained from `start` and
/// smoothed with a centripetal spline.
pub fn extract_midline(tri: &Triangulation, start: &Pose2D, config: &MidlineConfig) -> Result<WaypointPath, PlanningError> {
    let mids = midpoints(tri, config);
    if mids.is_empty() {
        return Err(PlanningError::EmptyMidline);
    }
    let (chain, closed) = chain_points(&mids, start, config.max_step);
    if chain.is_empty() {
        return Err(PlanningError::EmptyMidline);
    }
    Ok(smooth_path(chain, closed, config))
}

/// Baseline: each blue cone paired with its nearest yellow cone within the
/// threshold, midpoints chained and smoothed like the Delaunay midline.
pub fn naive_pairing_midline(cones: &[(f64, f64, ConeClass)], start: &Pose2D, config: &MidlineConfig) -> Result<WaypointPath, PlanningError> {
    let yellow: Vec<Vector2<f64>> = cones
        .iter()
        .filter(|c| c.2 == ConeClass::Yellow)
        .map(|c| Vector2::new(c.0, c.1))
        .collect();
    let mids: Vec<Vector2<f64>> = cones
        .iter()
        .filter(|c| c.2 == ConeClass::Blue)
        .filter_map(|c| {
            let b = Vector2::new(c.0, c.1);
            yellow
                .iter()
                .map(|y| (y, (y - b).norm()))
                .filter(|(_, d)| *d <= config.pairing_threshold)
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(y, _)| (b + y) / 2.0)
        })
        .collect();
    if mids.is_empty() {
        return Err(PlanningError::EmptyMidline);
    }
    let (chain, closed) = chain_points(&mids, start, config.max_step);
    if chain.is_empty() {
        return Err(PlanningError::EmptyMidline);
    }
    Ok(smooth_path(chain, closed, config))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planning::delaunay_triangulate;

    fn rows(n: usize, spacing: f64, width: f64) -> Vec<(f64, f64, ConeClass)> {
        let mut cones = Vec::new();
        for i in 0..n {
            cones.push((i as f64 * spacing, width / 2.0, ConeClass::Blue));
            cones.push((i as f64 * spacing, -width / 2.0, ConeClass::Yellow));
        }
        cones
    }

    #[test]
    fn parallel_rows_midpoints_on_centerline() {
        let tri = delaunay_triangulate(&rows(10, 3.5, 4.0)).unwrap();
        let mids = midpoints(&tri, &MidlineConfig::default());
        assert!(mids.len() >= 19);
        assert!(mids.iter().all(|m| m.y.abs() < 1e-6));
        let path = extract_midline(&tri, &Pose2D::new(-2.0, 0.0, 0.0), &MidlineConfig::default()).unwrap();
        assert!(path.points.iter().all(|p| p.y.abs() < 1e-6));
        assert!(!path.closed);
    }

    #[test]
    fn same_color_edges_ignored() {
        let cones = vec![
            (0.0, 0.0, ConeClass::Blue),
            (3.0, 0.0, ConeClass::Blue),
            (1.5, 3.0, ConeClass::Blue),
        ];
        let tri = delaunay_triangulate(&cones).unwrap();
        assert!(midpoints(&tri, &MidlineConfig::default()).is_empty());
        assert_eq!(
            extract_midline(&tri, &Pose2D::identity(), &MidlineConfig::default()),
            Err(PlanningError::EmptyMidline)
        );
    }

    #[test]
    fn delaunay_roughly_doubles_baseline() {
        let cones = rows(20, 3.5, 4.0);
        let tri = delaunay_triangulate(&cones).unwrap();
        let start = Pose2D::new(-2.0, 0.0, 0.0);
        let cfg = MidlineConfig::default();
        let d = extract_midline(&tri, &start, &cfg).unwrap();
        let b = naive_pairing_midline(&cones, &start, &cfg).unwrap();
        assert!(d.len() as f64 >= 1.8 * b.len() as f64, "{} vs {}", d.len(), b.len());
    }

    #[test]
    fn chain_bridges_one_wide_gap() {
        let mut pts: Vec<Vector2<f64>> = (0..6).map(|i| Vector2::new(i as f64 * 3.0, 0.0)).collect();
        pts.extend((0..6).map(|i| Vector2::new(15.0 + 8.0 + i as f64 * 3.0, 0.0)));
        let (chain, _) = chain_points(&pts, &Pose2D::new(-1.0, 0.0, 0.0), 6.0);
        assert_eq!(chain.len(), 12);
        // a sideways point beyond max_step is not bridged
        let side = vec![Vector2::new(0.0, 0.0), Vector2::new(3.0, 0.0), Vector2::new(6.0, 8.0)];
        assert_eq!(chain_points(&side, &Pose2D::new(-1.0, 0.0, 0.0), 6.0).0.len(), 2);
    }

    #[test]
    fn spline_passes_through_knots() {
        let knots = vec![Vector2::new(0.0, 0.0), Vector2::new(1.0, 1.0), Vector2::new(2.0, 0.0), Vector2::new(3.0, 1.0)];
        let s = catmull_rom(&knots, false, 4);
        assert_eq!(s.len(), 13);
        for (i, k) in knots.iter().enumerate() {
            assert!((s[(i * 4).min(12)] - k).norm() < 1e-12);
        }
    }
}
