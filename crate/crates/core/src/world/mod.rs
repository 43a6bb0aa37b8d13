//! Ground-truth world: tracks, vehicle kinematics and simulated sensors.

pub mod detector;
pub mod lidar;
pub mod odometry;
pub mod rng;
pub mod track;
pub mod vehicle;

pub use detector::{
    simulate_stereo_detector, stereo_feature_points, BoxQuality, CameraRig, DetectedBox, DetectorNoise, DetectorOutput,
    StereoTruth, STEREO_FEATURE_COUNT,
};
pub use lidar::{simulate_lidar, LidarConfig, LidarNoise};
pub use odometry::{simulate_odometry, OdomNoise, Odometer, OdometrySample};
pub use rng::{stream_rng, Stream};
pub use track::{
    SKIDPAD_ENTRY_LENGTH, SKIDPAD_EXIT_LENGTH, SKIDPAD_RADIUS,
    generate_track, menger_curvature, Mission, TrackCone, TrackDefinition, TrackSpec, Trigger,
    TriggerId,
};
pub use vehicle::{step_vehicle, VehicleParams, VehicleState};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorldError {
    #[error("invalid track spec: {0}")]
    InvalidSpec(String),
    #[error("invalid track: {0}")]
    InvalidTrack(String),
    #[error("track JSON error at line {line}, column {column}: {message}")]
    TrackParse {
        line: usize,
        column: usize,
        message: String,
    },
}
