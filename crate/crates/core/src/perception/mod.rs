//! Three-tier cone depth estimation: LiDAR-camera fusion, monocular box
//! height and stereo keypoint matching.

pub mod cone_filter;
pub mod dbscan;
pub mod fusion;
pub mod mono;
pub mod pipeline;
pub mod ransac;
pub mod stereo;

pub use cone_filter::{filter_cone_clusters, ConeFilterConfig};
pub use dbscan::{dbscan_cluster, ClusterSet};
pub use fusion::{fuse_lidar_camera, FusionConfig, FusionOutput};
pub use mono::{calibrate_mono, mono_depth_from_box, pnp_mono_depth, refit_mono_curve, MonoCalibration};
pub use pipeline::{
    lidar_cone_clusters, three_tier_pipeline, BoxOutcome, DropReason, PerceptionConfig, PipelineOutput, SensorFrame,
};
pub use ransac::{ransac_ground_removal, Plane3D, RansacConfig};
pub use stereo::{depth_from_disparity, stereo_depth, BoxRegion, KeypointPick, StereoConfig, StereoMode};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{back_project, CameraIntrinsics, ConeClass, GeometryError, Pixel, RigidTransform3D};
use crate::world::BoxQuality;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SourceTier {
    LidarFusion,
    Monocular,
    Stereo,
}

impl SourceTier {
    pub fn as_str(self) -> &'static str {
        match self {
            SourceTier::LidarFusion => "lidar_fusion",
            SourceTier::Monocular => "monocular",
            SourceTier::Stereo => "stereo",
        }
    }
}

/// A cone seen in one frame, in polar vehicle-frame coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeObservation {
    pub range: f64,
    /// Positive to the left.
    pub bearing: f64,
    pub class: ConeClass,
    pub source_tier: SourceTier,
    pub confidence: f64,
    /// Estimated optical-axis depth in the left camera frame.
    pub depth: f64,
    /// Ground-truth cone index carried through from the detector, if known.
    pub cone_id: Option<usize>,
}

impl ConeObservation {
    /// Builds an observation from a pixel and an optical-axis depth.
    pub fn from_pixel(
        px: &Pixel,
        depth: f64,
        k: &CameraIntrinsics,
        vehicle_from_camera: &RigidTransform3D,
        class: ConeClass,
        source_tier: SourceTier,
        confidence: f64,
        cone_id: Option<usize>,
    ) -> Self {
        let p = vehicle_from_camera.apply(&back_project(px, depth, k));
        Self {
            range: p.x.hypot(p.y),
            bearing: p.y.atan2(p.x),
            class,
            source_tier,
            confidence,
            depth,
            cone_id,
        }
    }

    pub fn position(&self) -> Vector3<f64> {
        Vector3::new(self.range * self.bearing.cos(), self.range * self.bearing.sin(), 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PerceptionError {
    #[error("need at least 3 points, got {found}")]
    InsufficientPoints { found: usize },
    #[error("no ground plane found (best inlier ratio {inlier_ratio:.3})")]
    NoPlaneFound { inlier_ratio: f64 },
    #[error("box quality {0:?} is not usable by the monocular tier")]
    BadConeQuality(BoxQuality),
    #[error("need at least 10 calibration samples, got {found}")]
    InsufficientSamples { found: usize },
    #[error("invalid calibration sample: {0}")]
    InvalidSample(String),
    #[error("disparity {disparity:.3} px too small")]
    ZeroDisparity { disparity: f64 },
    #[error("stereo depth {depth:.1} m beyond the sensor range")]
    OutOfRange { depth: f64 },
    #[error("box has no keypoints")]
    MissingKeypoints,
    #[error("no stereo features inside the matching region")]
    NoFeatures,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}
