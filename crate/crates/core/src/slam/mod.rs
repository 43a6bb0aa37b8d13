//! EKF SLAM over the planar pose and cone landmarks.

mod association;
mod ekf;
mod filter;
mod state;

pub use association::{
    associate_exhaustive, associate_jcbb, associate_nn, classes_compatible, observation_position, Association, Pairing,
};
pub use ekf::{
    innovation, innovation_covariance, measurement_model, measurement_update, motion_update, MeasurementNoise,
    PredictedMeasurement,
};
pub use filter::{parallel_correction, run_measurement, ExecutionMode, FilterStats, MeasurementResult, SlamFilter};
pub use state::{LandmarkMeta, MapEntry, SlamState};

use nalgebra::{Matrix3, Vector3};
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SlamError {
    #[error("frame has {observations} observations, JCBB limit is {limit}")]
    FrameTooLarge { observations: usize, limit: usize },
    #[error("state invariant violated: {0}")]
    Invariant(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AssociationMethod {
    #[default]
    Nn,
    Jcbb,
}

impl AssociationMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            AssociationMethod::Nn => "nn",
            AssociationMethod::Jcbb => "jcbb",
        }
    }
}

impl FromStr for AssociationMethod {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "nn" => Ok(Self::Nn),
            "jcbb" => Ok(Self::Jcbb),
            other => Err(format!("unknown association '{other}' (expected nn or jcbb)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlamConfig {
    /// Pose process noise variances per second: x, y, heading.
    pub process_noise: Vector3<f64>,
    pub initial_pose_sigma: f64,
    pub measurement: MeasurementNoise,
    pub association: AssociationMethod,
    /// NN gate radius (m).
    pub nn_gate: f64,
    pub jcbb_confidence: f64,
    pub max_jcbb_observations: usize,
    pub new_landmark_inflation: f64,
    /// Dead reckoning only when false.
    pub measurement_updates: bool,
}

impl Default for SlamConfig {
    fn default() -> Self {
        Self {
            process_noise: Vector3::new(0.001, 0.001, 0.0001),
            initial_pose_sigma: 0.01,
            measurement: MeasurementNoise::default(),
            association: AssociationMethod::Nn,
            nn_gate: 1.5,
            jcbb_confidence: 0.95,
            max_jcbb_observations: 50,
            new_landmark_inflation: 2.0,
            measurement_updates: true,
        }
    }
}

impl SlamConfig {
    pub fn process_noise_matrix(&self) -> Matrix3<f64> {
        Matrix3::from_diagonal(&self.process_noise)
    }
}
