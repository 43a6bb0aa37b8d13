use serde::{Deserialize, Serialize};

use crate::control::{ActuatorLimits, ControlCommand};
use crate::geometry::Pose2D;

/// Internal integration step of the kinematic model.
pub const SUBSTEP: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleParams {
    pub wheelbase: f64,
    pub width: f64,
    pub limits: ActuatorLimits,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            wheelbase: 1.53,
            width: 1.4,
            limits: ActuatorLimits::default(),
        }
    }
}

/// Kinematic bicycle state. `pose` is the rear-axle centre.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub pose: Pose2D,
    pub speed: f64,
    pub yaw_rate: f64,
    pub steering_angle: f64,
    pub wheelbase: f64,
}

impl VehicleState {
    pub fn at_rest(pose: Pose2D, wheelbase: f64) -> Self {
        Self {
            pose,
            speed: 0.0,
            yaw_rate: 0.0,
            steering_angle: 0.0,
            wheelbase,
        }
    }

    /// Front-axle centre in the world frame.
    pub fn front_axle(&self) -> Pose2D {
        Pose2D::new(
            self.pose.x + self.wheelbase * self.pose.heading.cos(),
            self.pose.y + self.wheelbase * self.pose.heading.sin(),
            self.pose.heading,
        )
    }
}

/// Advances the kinematic bicycle by `dt` seconds using forward-Euler substeps.
///
/// The command is clamped to `limits`; steering is applied instantly.
pub fn step_vehicle(
    state: &VehicleState,
    cmd: &ControlCommand,
    dt: f64,
    limits: &ActuatorLimits,
) -> VehicleState {
    assert!(dt > 0.0 && dt <= 0.05, "dt must be in (0, 0.05], got {dt}");
    let cmd = limits.clamp(*cmd);
    let steps = (dt / SUBSTEP - 1e-9).ceil().max(1.0) as usize;
    let h = dt / steps as f64;
    let mut x = state.pose.x;
    let mut y = state.pose.y;
    let mut heading = state.pose.heading;
    let mut v = state.speed;
    let k = cmd.steering_angle.tan() / state.wheelbase;
    for _ in 0..steps {
        x += v * heading.cos() * h;
        y += v * heading.sin() * h;
        heading += v * k * h;
        v = (v + cmd.acceleration * h).max(0.0);
    }
    VehicleState {
        pose: Pose2D::new(x, y, heading),
        speed: v,
        yaw_rate: v * k,
        steering_angle: cmd.steering_angle,
        wheelbase: state.wheelbase,
    }
}
