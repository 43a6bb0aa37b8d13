//! Shared geometric types: planar poses, rigid transforms, the pinhole camera
//! model, cone geometry and the Perspective-n-Point solver.

mod camera;
mod cloud;
mod cone;
mod pnp;
mod pose;
mod transform;

pub use camera::{back_project, project_point, undistort_pixel, CameraIntrinsics, Distortion, Pixel};
pub use cloud::{transform_lidar_to_camera, LidarPoint, PointCloud, LIDAR_RING_COUNT};
pub use cone::{ConeClass, ConeGeometry, CONE_KEYPOINT_COUNT};
pub use pnp::{solve_pnp, PnpConfig, PnpSolution};
pub use pose::{normalize_angle, Pose2D};
pub use transform::RigidTransform3D;

use thiserror::Error;

/// Errors raised by geometry operations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    /// The point lies on or behind the image plane.
    #[error("point is behind the camera (z = {z})")]
    Behind { z: f64 },
    #[error("rotation is not orthonormal with det +1 (deviation {deviation:e})")]
    InvalidRotation { deviation: f64 },
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("ring index {0} outside 0..16")]
    InvalidRing(u8),
    /// Too few correspondences, collinear keypoints or singular normal equations.
    #[error("degenerate PnP configuration: {0}")]
    DegenerateConfiguration(String),
    #[error("PnP did not converge: rms {rms_px:.4} px after {iterations} iterations")]
    NoConvergence { rms_px: f64, iterations: usize },
}
