use super::{ActuatorLimits, ControlCommand};
use crate::world::Mission;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MissionStatus {
    #[default]
    Starting,
    Racing,
    Finishing,
    EmergencyStop,
}

impl MissionStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            MissionStatus::Starting => "starting",
            MissionStatus::Racing => "racing",
            MissionStatus::Finishing => "finishing",
            MissionStatus::EmergencyStop => "emergency_stop",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmergencyCause {
    PerceptionTimeout,
    PoseUncertainty,
    OffTrack,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupervisorConfig {
    pub laps_required: u32,
    /// Seconds without a perception frame before stopping.
    pub perception_timeout: f64,
    pub max_pose_covariance_trace: f64,
    pub max_off_track: f64,
}

impl SupervisorConfig {
    pub fn for_mission(mission: Mission) -> Self {
        Self {
            laps_required: match mission {
                Mission::Trackdrive => 10,
                _ => 1,
            },
            perception_timeout: 0.5,
            max_pose_covariance_trace: 16.0,
            max_off_track: 3.0,
        }
    }
}

/// Per-tick inputs to the supervisor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TickContext {
    pub time: f64,
    /// Time of the newest perception frame, `None` before the first.
    pub last_perception: Option<f64>,
    pub pose_covariance_trace: f64,
    /// Distance outside the track corridor, 0 when inside.
    pub off_track_distance: f64,
    pub has_valid_path: bool,
    pub laps_completed: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Supervisor {
    pub config: SupervisorConfig,
    pub status: MissionStatus,
    pub cause: Option<EmergencyCause>,
    started_at: Option<f64>,
}

impl Supervisor {
    pub fn new(config: SupervisorConfig) -> Self {
        Self {
            config,
            status: MissionStatus::Starting,
            cause: None,
            started_at: None,
        }
    }

    pub fn step(&mut self, ctx: &TickContext) -> MissionStatus {
        if self.status == MissionStatus::EmergencyStop {
            return self.status;
        }
        let since = self.started_at.get_or_insert(ctx.time);
        // before the first frame the watchdog counts from the first tick
        let last = ctx.last_perception.unwrap_or(*since);
        let cause = if ctx.time - last > self.config.perception_timeout {
            Some(EmergencyCause::PerceptionTimeout)
        } else if ctx.pose_covariance_trace > self.config.max_pose_covariance_trace {
            Some(EmergencyCause::PoseUncertainty)
        } else if ctx.off_track_distance > self.config.max_off_track {
            Some(EmergencyCause::OffTrack)
        } else {
            None
        };
        if let Some(c) = cause {
            log::warn!("emergency stop at t={:.2}: {c:?}", ctx.time);
            self.cause = Some(c);
            self.status = MissionStatus::EmergencyStop;
            return self.status;
        }
        self.status = match self.status {
            MissionStatus::Starting if ctx.has_valid_path => MissionStatus::Racing,
            MissionStatus::Racing if ctx.laps_completed >= self.config.laps_required => MissionStatus::Finishing,
            s => s,
        };
        self.status
    }
}

/// Full braking, wheels straight.
pub fn emergency_command(limits: &ActuatorLimits, timestamp: f64) -> ControlCommand {
    ControlCommand::new(0.0, -limits.max_brake, timestamp)
}
