use serde::{Deserialize, Serialize};

/// Actuator request. Positive steering turns left; negative acceleration brakes.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlCommand {
    pub steering_angle: f64,
    pub acceleration: f64,
    pub timestamp: f64,
}

impl ControlCommand {
    pub fn new(steering_angle: f64, acceleration: f64, timestamp: f64) -> Self {
        Self {
            steering_angle,
            acceleration,
            timestamp,
        }
    }
}

/// Actuator envelope shared by the vehicle model and the controllers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActuatorLimits {
    pub max_steer: f64,
    pub max_accel: f64,
    pub max_brake: f64,
}

impl Default for ActuatorLimits {
    fn default() -> Self {
        Self {
            max_steer: 0.52,
            max_accel: 4.0,
            max_brake: 8.0,
        }
    }
}

impl ActuatorLimits {
    pub fn clamp(&self, cmd: ControlCommand) -> ControlCommand {
        ControlCommand {
            steering_angle: cmd.steering_angle.clamp(-self.max_steer, self.max_steer),
            acceleration: cmd.acceleration.clamp(-self.max_brake, self.max_accel),
            timestamp: cmd.timestamp,
        }
    }

    pub fn admits(&self, cmd: &ControlCommand) -> bool {
        cmd.steering_angle.abs() <= self.max_steer
            && cmd.acceleration >= -self.max_brake
            && cmd.acceleration <= self.max_accel
    }
}
