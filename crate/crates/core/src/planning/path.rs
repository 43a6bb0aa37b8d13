use nalgebra::Vector2;
use std::fmt::Write as _;

use crate::world::menger_curvature;

/// Friction-circle speed law: `v = min(v_max, sqrt(a_lat_max / |κ|))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedProfile {
    pub v_max: f64,
    pub a_lat_max: f64,
}

impl Default for SpeedProfile {
    fn default() -> Self {
        Self {
            v_max: 6.0,
            a_lat_max: 4.0,
        }
    }
}

impl SpeedProfile {
    pub fn target(&self, curvature: f64) -> f64 {
        self.v_max.min((self.a_lat_max / curvature.abs().max(1e-6)).sqrt())
    }
}

/// Nearest-point projection onto a path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathProjection {
    pub segment: usize,
    /// Fraction along the segment in [0, 1].
    pub t: f64,
    pub point: Vector2<f64>,
    /// Arc length of the projection from the first point.
    pub s: f64,
    /// Signed lateral offset of the query point, positive left of the path.
    pub offset: f64,
    pub heading: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaypointPath {
    pub points: Vec<Vector2<f64>>,
    pub curvature: Vec<f64>,
    pub speed: Vec<f64>,
    pub closed: bool,
    cumulative: Vec<f64>,
}

pub const MIN_POINT_SPACING: f64 = 0.01;

impl WaypointPath {
    /// Builds a path, dropping points closer than 1 cm to their predecessor.
    pub fn new(points: Vec<Vector2<f64>>, closed: bool, profile: &SpeedProfile) -> Self {
        let mut pts: Vec<Vector2<f64>> = Vec::with_capacity(points.len());
        for p in points {
            if pts.last().map_or(true, |q: &Vector2<f64>| (p - q).norm() >= MIN_POINT_SPACING) {
                pts.push(p);
            }
        }
        if closed {
            while pts.len() > 1 && (pts[0] - pts[pts.len() - 1]).norm() < MIN_POINT_SPACING {
                pts.pop();
            }
        }
        let curvature = discrete_curvature(&pts, closed);
        let speed = curvature.iter().map(|&k| profile.target(k)).collect();
        let mut path = Self {
            points: pts,
            curvature,
            speed,
            closed,
            cumulative: Vec::new(),
        };
        path.cumulative = path.compute_cumulative();
        path
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn compute_cumulative(&self) -> Vec<f64> {
        let mut s = Vec::with_capacity(self.points.len() + 1);
        let mut acc = 0.0;
        s.push(0.0);
        for i in 0..self.segment_count() {
            acc += (self.end(i) - self.points[i]).norm();
            s.push(acc);
        }
        s
    }

    pub fn segment_count(&self) -> usize {
        match (self.points.len(), self.closed) {
            (0 | 1, _) => 0,
            (n, true) => n,
            (n, false) => n - 1,
        }
    }

    fn end(&self, segment: usize) -> Vector2<f64> {
        self.points[(segment + 1) % self.points.len()]
    }

    /// Arc length at each point, followed by the total length.
    pub fn arc_lengths(&self) -> &[f64] {
        &self.cumulative
    }

    pub fn length(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }

    pub fn project(&self, p: Vector2<f64>) -> Option<PathProjection> {
        self.project_window(p, None)
    }

    /// Projection restricted to segments within `window` arc length after `hint_s`
    /// when given, so self-intersecting paths stay on the right branch.
    pub fn project_window(&self, p: Vector2<f64>, window: Option<(f64, f64)>) -> Option<PathProjection> {
        if self.points.len() == 1 {
            let d = p - self.points[0];
            return Some(PathProjection {
                segment: 0,
                t: 0.0,
                point: self.points[0],
                s: 0.0,
                offset: d.norm(),
                heading: 0.0,
            });
        }
        let total = self.length();
        let mut best: Option<(f64, PathProjection)> = None;
        for i in 0..self.segment_count() {
            if let Some((hint, span)) = window {
                let mut ds = self.cumulative[i] - hint;
                if self.closed {
                    ds = ds.rem_euclid(total);
                    if ds > total - span {
                        ds -= total;
                    }
                }
                let seg_len = self.cumulative[i + 1] - self.cumulative[i];
                if ds > span || ds + seg_len < -span {
                    continue;
                }
            }
            let a = self.points[i];
            let b = self.end(i);
            let ab = b - a;
            let l2 = ab.norm_squared();
            let t = ((p - a).dot(&ab) / l2).clamp(0.0, 1.0);
            let q = a + ab * t;
            let d2 = (p - q).norm_squared();
            if best.as_ref().map_or(true, |(bd, _)| d2 < *bd) {
                let dir = ab / l2.sqrt();
                let rel = p - q;
                best = Some((
                    d2,
                    PathProjection {
                        segment: i,
                        t,
                        point: q,
                        s: self.cumulative[i] + t * l2.sqrt(),
                        offset: dir.x * rel.y - dir.y * rel.x,
                        heading: dir.y.atan2(dir.x),
                    },
                ));
            }
        }
        match best {
            Some((_, proj)) => Some(proj),
            None if window.is_some() => self.project_window(p, None),
            None => None,
        }
    }

    /// Point at arc length `s`. Closed paths wrap; open paths return `None`
    /// beyond either end.
    pub fn point_at(&self, s: f64) -> Option<Vector2<f64>> {
        if self.points.is_empty() {
            return None;
        }
        let total = self.length();
        let s = if self.closed && total > 0.0 {
            s.rem_euclid(total)
        } else {
            if s < -1e-12 || s > total + 1e-12 {
                return None;
            }
            s.clamp(0.0, total)
        };
        if self.segment_count() == 0 {
            return Some(self.points[0]);
        }
        let i = match self.cumulative.partition_point(|&c| c <= s) {
            0 => 0,
            k => (k - 1).min(self.segment_count() - 1),
        };
        let a = self.points[i];
        let b = self.end(i);
        let len = self.cumulative[i + 1] - self.cumulative[i];
        let t = if len > 0.0 { (s - self.cumulative[i]) / len } else { 0.0 };
        Some(a + (b - a) * t.clamp(0.0, 1.0))
    }

    /// Speed target interpolated at the nearest point index.
    pub fn speed_at(&self, proj: &PathProjection) -> f64 {
        let i = proj.segment;
        let j = (i + 1) % self.points.len();
        self.speed[i] * (1.0 - proj.t) + self.speed[j.min(self.speed.len() - 1)] * proj.t
    }

    /// Re-samples at uniform arc-length spacing.
    pub fn resampled(&self, spacing: f64, profile: &SpeedProfile) -> WaypointPath {
        let total = self.length();
        let n = (total / spacing).round().max(1.0) as usize;
        let step = total / n as f64;
        let count = if self.closed { n } else { n + 1 };
        let pts = (0..count).filter_map(|i| self.point_at(i as f64 * step)).collect();
        WaypointPath::new(pts, self.closed, profile)
    }

    /// ∫κ² ds, approximated per point with the mean adjacent segment length.
    pub fn curvature_energy(&self) -> f64 {
        let n = self.points.len();
        if n < 3 {
            return 0.0;
        }
        (0..n)
            .map(|i| {
                let prev = if i > 0 { Some(i - 1) } else if self.closed { Some(n - 1) } else { None };
                let next = if i + 1 < n { Some(i + 1) } else if self.closed { Some(0) } else { None };
                let ds = match (prev, next) {
                    (Some(p), Some(q)) => 0.5 * ((self.points[i] - self.points[p]).norm() + (self.points[q] - self.points[i]).norm()),
                    _ => 0.0,
                };
                self.curvature[i] * self.curvature[i] * ds
            })
            .sum()
    }

    pub fn max_abs_curvature(&self) -> f64 {
        self.curvature.iter().fold(0.0, |m, k| m.max(k.abs()))
    }

    /// CSV with columns `s_m, x, y, curvature_1pm, v_target_mps`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("s_m,x,y,curvature_1pm,v_target_mps\n");
        for i in 0..self.points.len() {
            let p = self.points[i];
            let _ = writeln!(out, "{},{},{},{},{}", self.cumulative[i], p.x, p.y, self.curvature[i], self.speed[i]);
        }
        out
    }
}

/// Menger curvature per point; open-path endpoints copy their neighbour.
pub fn discrete_curvature(points: &[Vector2<f64>], closed: bool) -> Vec<f64> {
    let n = points.len();
    if n < 3 {
        return vec![0.0; n];
    }
    let mut k = vec![0.0; n];
    for i in 0..n {
        let (a, c) = if closed {
            (points[(i + n - 1) % n], points[(i + 1) % n])
        } else if i == 0 || i == n - 1 {
            continue;
        } else {
            (points[i - 1], points[i + 1])
        };
        k[i] = menger_curvature(a, points[i], c);
    }
    if !closed {
        k[0] = k[1];
        k[n - 1] = k[n - 2];
    }
    k
}
