use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{GeometryError, RigidTransform3D};

pub const LIDAR_RING_COUNT: u8 = 16;

/// One LiDAR return. `ring` is the laser channel, 0 = lowest elevation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LidarPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub ring: u8,
    pub intensity: f64,
}

impl LidarPoint {
    pub fn new(position: Vector3<f64>, ring: u8, intensity: f64) -> Self {
        Self {
            x: position.x,
            y: position.y,
            z: position.z,
            ring,
            intensity,
        }
    }

    pub fn position(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<LidarPoint>,
}

impl PointCloud {
    pub fn new(points: Vec<LidarPoint>) -> Result<Self, GeometryError> {
        if let Some(p) = points.iter().find(|p| p.ring >= LIDAR_RING_COUNT) {
            return Err(GeometryError::InvalidRing(p.ring));
        }
        Ok(Self { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn positions(&self) -> impl Iterator<Item = Vector3<f64>> + '_ {
        self.points.iter().map(LidarPoint::position)
    }

    /// Sub-cloud with the given point indices, in the given order.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
        }
    }
}

/// Maps every LiDAR-frame point into the camera frame. Ring and intensity are kept.
pub fn transform_lidar_to_camera(cloud: &PointCloud, extrinsic: &RigidTransform3D) -> PointCloud {
    PointCloud {
        points: cloud
            .points
            .iter()
            .map(|p| LidarPoint::new(extrinsic.apply(&p.position()), p.ring, p.intensity))
            .collect(),
    }
}
