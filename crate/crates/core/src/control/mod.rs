//! Lateral tracking (pure pursuit, Stanley), speed PID and the mission supervisor.

mod command;
mod pid;
mod supervisor;
mod tracking;

pub use command::{ActuatorLimits, ControlCommand};
pub use pid::{pid_speed, PidGains, PidState};
pub use supervisor::{emergency_command, EmergencyCause, MissionStatus, Supervisor, SupervisorConfig, TickContext};
pub use tracking::{
    cross_track_error, pure_pursuit, stanley, steering_command, LateralController, LateralOutput, PurePursuitParams,
    StanleyParams, TrackingError,
};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ControlError {
    #[error("path is empty")]
    EmptyPath,
    #[error("no path point lies ahead of the vehicle")]
    PathExhausted,
}
