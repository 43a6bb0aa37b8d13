use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_4;

use super::{ConeObservation, MonoCalibration, Plane3D, SourceTier};
use super::ClusterSet;
use crate::geometry::{project_point, ConeClass, ConeGeometry, PointCloud, RigidTransform3D};
use crate::world::{CameraRig, DetectedBox};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionConfig {
    /// Median instead of mean of the point depths.
    pub use_median: bool,
    /// Shift the depth from the sampled front surface to the cone axis.
    pub surface_compensation: bool,
    /// Box-height depth curve used to break ties between overlapping boxes.
    /// Falls back to a pinhole estimate from the class height.
    pub size_prior: Option<MonoCalibration>,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            use_median: false,
            surface_compensation: true,
            size_prior: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FusionOutput {
    /// `(box index, observation)` for every box that received LiDAR points.
    pub observations: Vec<(usize, ConeObservation)>,
    /// Mean (or median) camera-frame depth of the points used, before compensation.
    pub raw_depths: Vec<f64>,
    pub unmatched: Vec<usize>,
}

struct Hit {
    depth: f64,
    height: Option<f64>,
}

/// Assigns cone-cluster points to detector boxes and turns each box into a
/// LiDAR-ranged observation.
///
/// A cluster is credited to a single box, so a partly hidden cone does not
/// average in the cone in front of it; if several clusters land in one box
/// the largest is used.
pub fn fuse_lidar_camera(
    clusters: &ClusterSet,
    cloud: &PointCloud,
    boxes: &[DetectedBox],
    camera_from_lidar: &RigidTransform3D,
    rig: &CameraRig,
    plane: Option<&Plane3D>,
    config: &FusionConfig,
) -> FusionOutput {
    let k = &rig.intrinsics;
    let mut projected = Vec::new();
    for (cid, cluster) in clusters.clusters.iter().enumerate() {
        for &i in cluster {
            let p_lidar = cloud.points[i].position();
            let p = camera_from_lidar.apply(&p_lidar);
            if let Ok(px) = project_point(&p, k) {
                let height = plane.map(|pl| pl.signed_distance(&p_lidar));
                projected.push((cid, px, Hit { depth: p.z, height }));
            }
        }
    }

    // each cluster belongs to the box holding most of its points; on a tie the
    // box whose size best agrees with the cluster depth wins
    let mut owner: Vec<Option<usize>> = vec![None; clusters.clusters.len()];
    for (cid, slot) in owner.iter_mut().enumerate() {
        let members: Vec<(&crate::geometry::Pixel, f64)> = projected
            .iter()
            .filter(|(c, _, _)| *c == cid)
            .map(|(_, px, hit)| (px, hit.depth))
            .collect();
        if members.is_empty() {
            continue;
        }
        let depth = members.iter().map(|m| m.1).sum::<f64>() / members.len() as f64;
        let mut best: Option<(usize, usize, f64)> = None;
        for (bi, b) in boxes.iter().enumerate() {
            let count = members.iter().filter(|(px, _)| b.contains(px)).count();
            if count == 0 {
                continue;
            }
            let implied = match &config.size_prior {
                Some(c) => {
                    let scale = ConeGeometry::for_class(ConeClass::Blue).height / ConeGeometry::for_class(b.class).height;
                    c.depth(b.h.max(1.0) / k.image_height * scale)
                }
                None => k.fy * ConeGeometry::for_class(b.class).height / b.h.max(1.0),
            };
            let mismatch = (depth / implied).ln().abs();
            let better = match best {
                None => true,
                Some((_, c, m)) => count > c || (count == c && mismatch < m),
            };
            if better {
                best = Some((bi, count, mismatch));
            }
        }
        *slot = best.map(|(bi, _, _)| bi);
    }

    let mut out = FusionOutput::default();
    for (bi, b) in boxes.iter().enumerate() {
        let mut by_cluster: BTreeMap<usize, Vec<&Hit>> = BTreeMap::new();
        for (cid, px, hit) in &projected {
            if owner[*cid] == Some(bi) && b.contains(px) {
                by_cluster.entry(*cid).or_default().push(hit);
            }
        }
        let Some(hits) = by_cluster.into_values().max_by(|a, b| {
            a.len().cmp(&b.len()).then_with(|| mean_depth(b).total_cmp(&mean_depth(a)))
        }) else {
            out.unmatched.push(bi);
            continue;
        };
        let raw = if config.use_median {
            let mut d: Vec<f64> = hits.iter().map(|h| h.depth).collect();
            d.sort_by(f64::total_cmp);
            let m = d.len() / 2;
            if d.len() % 2 == 0 {
                (d[m - 1] + d[m]) / 2.0
            } else {
                d[m]
            }
        } else {
            mean_depth(&hits)
        };
        let mut depth = raw;
        if config.surface_compensation {
            let g = ConeGeometry::for_class(b.class);
            let offset = hits
                .iter()
                .map(|h| FRAC_PI_4 * g.radius_at(h.height.unwrap_or(0.3 * g.height).clamp(0.0, g.height)))
                .sum::<f64>()
                / hits.len() as f64;
            depth += offset;
        }
        let obs = ConeObservation::from_pixel(
            &crate::geometry::Pixel::new(b.u, b.v),
            depth,
            k,
            &rig.vehicle_from_left,
            b.class,
            SourceTier::LidarFusion,
            b.confidence,
            b.cone_id,
        );
        out.raw_depths.push(raw);
        out.observations.push((bi, obs));
    }
    out
}

fn mean_depth(hits: &[&Hit]) -> f64 {
    hits.iter().map(|h| h.depth).sum::<f64>() / hits.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{back_project, LidarPoint, Pixel};
    use crate::world::BoxQuality;
    use nalgebra::Vector3;

    fn boxed(u: f64, v: f64, w: f64, h: f64) -> DetectedBox {
        DetectedBox {
            u,
            v,
            w,
            h,
            class: ConeClass::Blue,
            confidence: 1.0,
            keypoints: None,
            quality: BoxQuality::Good,
            cone_id: None,
        }
    }

    /// Identity extrinsic: the "LiDAR" points are already in the camera frame.
    fn cloud_at(pixels_depths: &[(Pixel, f64)], rig: &CameraRig) -> (PointCloud, ClusterSet) {
        let pts: Vec<LidarPoint> = pixels_depths
            .iter()
            .map(|(px, d)| LidarPoint::new(back_project(px, *d, &rig.intrinsics), 0, 0.5))
            .collect();
        let n = pts.len();
        (
            PointCloud::new(pts).unwrap(),
            ClusterSet {
                clusters: vec![(0..n).collect()],
                noise: vec![],
            },
        )
    }

    const RAW: FusionConfig = FusionConfig {
        use_median: false,
        surface_compensation: false,
        size_prior: None,
    };

    #[test]
    fn depth_is_exact_mean() {
        let rig = CameraRig::default();
        let depths = [4.9, 5.0, 5.05, 5.2];
        let pd: Vec<_> = depths.iter().enumerate().map(|(i, d)| (Pixel::new(640.0 + i as f64, 360.0), *d)).collect();
        let (cloud, set) = cloud_at(&pd, &rig);
        let out = fuse_lidar_camera(&set, &cloud, &[boxed(642.0, 360.0, 20.0, 20.0)], &RigidTransform3D::identity(), &rig, None, &RAW);
        let mean = depths.iter().sum::<f64>() / 4.0;
        assert!((out.raw_depths[0] - mean).abs() < 1e-12);
        assert!((out.observations[0].1.depth - mean).abs() < 1e-12);
    }

    #[test]
    fn empty_box_is_unmatched() {
        let rig = CameraRig::default();
        let (cloud, set) = cloud_at(&[(Pixel::new(100.0, 100.0), 5.0)], &rig);
        let out = fuse_lidar_camera(&set, &cloud, &[boxed(640.0, 360.0, 20.0, 20.0)], &RigidTransform3D::identity(), &rig, None, &RAW);
        assert!(out.observations.is_empty());
        assert_eq!(out.unmatched, vec![0]);
    }

    #[test]
    fn side_by_side_boxes_use_own_points() {
        let rig = CameraRig::default();
        let pd = [
            (Pixel::new(400.0, 360.0), 6.0),
            (Pixel::new(402.0, 361.0), 6.2),
            (Pixel::new(800.0, 360.0), 9.0),
            (Pixel::new(801.0, 362.0), 9.4),
        ];
        let pts: Vec<LidarPoint> = pd
            .iter()
            .map(|(px, d)| LidarPoint::new(back_project(px, *d, &rig.intrinsics), 0, 0.5))
            .collect();
        let cloud = PointCloud::new(pts).unwrap();
        let set = ClusterSet {
            clusters: vec![vec![0, 1], vec![2, 3]],
            noise: vec![],
        };
        let boxes = [boxed(401.0, 360.0, 20.0, 20.0), boxed(800.0, 360.0, 20.0, 20.0)];
        let out = fuse_lidar_camera(&set, &cloud, &boxes, &RigidTransform3D::identity(), &rig, None, &RAW);
        assert_eq!(out.observations.len(), 2);
        assert!((out.raw_depths[0] - 6.1).abs() < 1e-12);
        assert!((out.raw_depths[1] - 9.2).abs() < 1e-12);
    }

    #[test]
    fn median_option() {
        let rig = CameraRig::default();
        let pd: Vec<_> = [5.0, 5.1, 9.0].iter().map(|d| (Pixel::new(640.0, 360.0), *d)).collect();
        let (cloud, set) = cloud_at(&pd, &rig);
        let config = FusionConfig {
            use_median: true,
            surface_compensation: false,
            size_prior: None,
        };
        let out = fuse_lidar_camera(&set, &cloud, &[boxed(640.0, 360.0, 10.0, 10.0)], &RigidTransform3D::identity(), &rig, None, &config);
        assert_eq!(out.raw_depths[0], 5.1);
    }

    #[test]
    fn bearing_and_range_from_box_centre() {
        let rig = CameraRig::default();
        let (cloud, set) = cloud_at(&[(Pixel::new(640.0, 360.0), 5.0)], &rig);
        let out = fuse_lidar_camera(&set, &cloud, &[boxed(640.0, 360.0, 10.0, 10.0)], &RigidTransform3D::identity(), &rig, None, &RAW);
        let obs = &out.observations[0].1;
        let cam = rig.vehicle_from_left.translation();
        let expected = Vector3::new(cam.x + 5.0, cam.y, 0.0);
        assert!((obs.range - expected.x.hypot(expected.y)).abs() < 1e-9);
        assert!((obs.bearing - expected.y.atan2(expected.x)).abs() < 1e-9);
    }
}
