use nalgebra::{Matrix3, Vector3};
use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;

use super::PerceptionError;
use crate::geometry::PointCloud;

/// Plane `normal . p + d = 0` with a unit normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane3D {
    pub normal: Vector3<f64>,
    pub d: f64,
    pub inliers: usize,
}

impl Plane3D {
    pub fn signed_distance(&self, p: &Vector3<f64>) -> f64 {
        self.normal.dot(p) + self.d
    }

    fn through(a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>) -> Option<Self> {
        let n = (b - a).cross(&(c - a));
        let len = n.norm();
        if len < 1e-12 {
            return None;
        }
        let mut normal = n / len;
        // keep normals pointing up so heights above ground are positive
        if normal.z < 0.0 {
            normal = -normal;
        }
        Some(Self {
            normal,
            d: -normal.dot(a),
            inliers: 0,
        })
    }

    /// Least-squares plane through `points` (smallest scatter eigenvector).
    pub fn fit(points: &[Vector3<f64>]) -> Option<Self> {
        if points.len() < 3 {
            return None;
        }
        let centroid = points.iter().sum::<Vector3<f64>>() / points.len() as f64;
        let mut scatter = Matrix3::zeros();
        for p in points {
            let q = p - centroid;
            scatter += q * q.transpose();
        }
        let eig = scatter.symmetric_eigen();
        let (idx, _) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))?;
        let mut normal: Vector3<f64> = eig.eigenvectors.column(idx).into_owned().normalize();
        if normal.z < 0.0 {
            normal = -normal;
        }
        Some(Self {
            normal,
            d: -normal.dot(&centroid),
            inliers: points.len(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacConfig {
    pub threshold: f64,
    pub max_iterations: usize,
    /// Below this inlier fraction the scene is treated as degenerate.
    pub min_inlier_ratio: f64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            threshold: 0.05,
            max_iterations: 200,
            min_inlier_ratio: 0.2,
        }
    }
}

fn inlier_mask(points: &[Vector3<f64>], plane: &Plane3D, threshold: f64) -> (Vec<bool>, usize) {
    let mask: Vec<bool> = points
        .iter()
        .map(|p| plane.signed_distance(p).abs() <= threshold)
        .collect();
    let n = mask.iter().filter(|&&m| m).count();
    (mask, n)
}

/// Segments the dominant plane and returns it with the remaining points.
pub fn ransac_ground_removal(
    cloud: &PointCloud,
    config: &RansacConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(Plane3D, PointCloud), PerceptionError> {
    let n = cloud.len();
    if n < 3 {
        return Err(PerceptionError::InsufficientPoints { found: n });
    }
    let points: Vec<Vector3<f64>> = cloud.positions().collect();
    let mut best: Option<(Plane3D, usize)> = None;
    for _ in 0..config.max_iterations {
        let idx = sample(rng, n, 3);
        let Some(plane) = Plane3D::through(&points[idx.index(0)], &points[idx.index(1)], &points[idx.index(2)])
        else {
            continue;
        };
        let (_, count) = inlier_mask(&points, &plane, config.threshold);
        if best.map_or(true, |(_, c)| count > c) {
            best = Some((plane, count));
        }
    }
    let Some((hypothesis, count)) = best else {
        return Err(PerceptionError::NoPlaneFound { inlier_ratio: 0.0 });
    };
    let ratio = count as f64 / n as f64;
    if ratio < config.min_inlier_ratio {
        return Err(PerceptionError::NoPlaneFound { inlier_ratio: ratio });
    }

    let (mask, _) = inlier_mask(&points, &hypothesis, config.threshold);
    let inliers: Vec<Vector3<f64>> = points.iter().zip(&mask).filter(|(_, &m)| m).map(|(p, _)| *p).collect();
    let mut plane = hypothesis;
    plane.inliers = count;
    if let Some(refit) = Plane3D::fit(&inliers) {
        let (_, refit_count) = inlier_mask(&points, &refit, config.threshold);
        if refit_count >= count {
            plane = Plane3D {
                inliers: refit_count,
                ..refit
            };
        }
    }
    let (mask, _) = inlier_mask(&points, &plane, config.threshold);
    let keep: Vec<usize> = (0..n).filter(|&i| !mask[i]).collect();
    Ok((plane, cloud.select(&keep)))
}
