use nalgebra::Vector3;

use super::{ClusterSet, Plane3D};
use crate::geometry::PointCloud;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConeFilterConfig {
    pub min_height: f64,
    pub max_height: f64,
    pub max_footprint: f64,
}

impl Default for ConeFilterConfig {
    fn default() -> Self {
        Self {
            min_height: 0.15,
            max_height: 0.60,
            max_footprint: 0.5,
        }
    }
}

/// Keeps clusters whose top is cone-height above the plane and whose
/// footprint is cone-sized. Rejected clusters move to `noise`.
pub fn filter_cone_clusters(
    clusters: &ClusterSet,
    cloud: &PointCloud,
    plane: &Plane3D,
    config: &ConeFilterConfig,
) -> ClusterSet {
    let mut out = ClusterSet {
        clusters: Vec::new(),
        noise: clusters.noise.clone(),
    };
    for cluster in &clusters.clusters {
        let pts: Vec<Vector3<f64>> = cluster.iter().map(|&i| cloud.points[i].position()).collect();
        let height = pts.iter().map(|p| plane.signed_distance(p)).fold(f64::NEG_INFINITY, f64::max);
        // horizontal extent: spread of the points projected onto the plane
        let flat: Vec<Vector3<f64>> = pts.iter().map(|p| p - plane.normal * plane.signed_distance(p)).collect();
        let mut footprint: f64 = 0.0;
        for (i, a) in flat.iter().enumerate() {
            for b in &flat[i + 1..] {
                footprint = footprint.max((a - b).norm());
            }
        }
        if (config.min_height..=config.max_height).contains(&height) && footprint <= config.max_footprint {
            out.clusters.push(cluster.clone());
        } else {
            out.noise.extend(cluster.iter().copied());
        }
    }
    out.noise.sort_unstable();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::LidarPoint;

    fn column(height: f64, width: f64) -> (PointCloud, ClusterSet) {
        let pts: Vec<LidarPoint> = (0..=10)
            .map(|i| {
                let f = i as f64 / 10.0;
                LidarPoint::new(Vector3::new(5.0 + width * f, 0.0, height * f), 0, 0.5)
            })
            .collect();
        let set = ClusterSet {
            clusters: vec![(0..pts.len()).collect()],
            noise: vec![],
        };
        (PointCloud::new(pts).unwrap(), set)
    }

    fn ground() -> Plane3D {
        Plane3D {
            normal: Vector3::z(),
            d: 0.0,
            inliers: 0,
        }
    }

    #[test]
    fn small_cone_kept() {
        let (cloud, set) = column(0.32, 0.2);
        let out = filter_cone_clusters(&set, &cloud, &ground(), &ConeFilterConfig::default());
        assert_eq!(out.clusters.len(), 1);
    }

    #[test]
    fn pole_dropped() {
        let (cloud, set) = column(1.8, 0.1);
        let out = filter_cone_clusters(&set, &cloud, &ground(), &ConeFilterConfig::default());
        assert!(out.clusters.is_empty());
        assert_eq!(out.noise.len(), 11);
    }

    #[test]
    fn debris_dropped() {
        let (cloud, set) = column(0.05, 0.3);
        let out = filter_cone_clusters(&set, &cloud, &ground(), &ConeFilterConfig::default());
        assert!(out.clusters.is_empty());
    }

    #[test]
    fn wide_cluster_dropped() {
        let (cloud, set) = column(0.3, 2.0);
        let out = filter_cone_clusters(&set, &cloud, &ground(), &ConeFilterConfig::default());
        assert!(out.clusters.is_empty());
    }
}
