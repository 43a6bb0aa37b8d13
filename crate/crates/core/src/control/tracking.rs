use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use std::str::FromStr;

use super::ControlError;
use crate::control::{ActuatorLimits, ControlCommand};
use crate::geometry::{normalize_angle, Pose2D};
use crate::planning::{PathProjection, WaypointPath};
use crate::world::VehicleState;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackingError {
    /// Positive when the reference point is left of the path.
    pub cross_track: f64,
    /// Path heading minus vehicle heading, in (-π, π].
    pub heading_error: f64,
    pub lookahead_point: [f64; 2],
}

fn project(path: &WaypointPath, reference: &Pose2D, hint: Option<f64>) -> Result<PathProjection, ControlError> {
    if path.is_empty() {
        return Err(ControlError::EmptyPath);
    }
    let window = hint.map(|s| (s, 8.0));
    path.project_window(reference.position(), window).ok_or(ControlError::EmptyPath)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PurePursuitParams {
    /// Lookahead time gain (s).
    pub k_lookahead: f64,
    pub l_min: f64,
}

impl Default for PurePursuitParams {
    fn default() -> Self {
        Self {
            k_lookahead: 0.5,
            l_min: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StanleyParams {
    pub k_gain: f64,
    pub v_soft: f64,
}

impl Default for StanleyParams {
    fn default() -> Self {
        Self { k_gain: 1.2, v_soft: 0.5 }
    }
}

/// Lateral controller output plus the projection used, for progress tracking.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LateralOutput {
    pub steering: f64,
    pub error: TrackingError,
    pub projection: PathProjection,
}

/// Pure pursuit about the rear axle. The lookahead point sits `L_d` of arc
/// length past the nearest-point projection.
pub fn pure_pursuit(
    state: &VehicleState,
    path: &WaypointPath,
    params: &PurePursuitParams,
    limits: &ActuatorLimits,
    hint: Option<f64>,
) -> Result<LateralOutput, ControlError> {
    let proj = project(path, &state.pose, hint)?;
    let ld = params.l_min.max(params.k_lookahead * state.speed);
    let target = match path.point_at(proj.s + ld) {
        Some(p) => p,
        None => {
            // open path ending inside the lookahead: aim at the end while it is ahead
            let end = *path.points.last().expect("non-empty path");
            if state.pose.inverse_transform_point(end).x <= 0.0 {
                return Err(ControlError::PathExhausted);
            }
            end
        }
    };
    let local = state.pose.inverse_transform_point(target);
    let alpha = local.y.atan2(local.x);
    let steering = (state.wheelbase * 2.0 * alpha.sin() / ld).atan();
    Ok(LateralOutput {
        steering: steering.clamp(-limits.max_steer, limits.max_steer),
        error: TrackingError {
            cross_track: proj.offset,
            heading_error: normalize_angle(proj.heading - state.pose.heading),
            lookahead_point: [target.x, target.y],
        },
        projection: proj,
    })
}

/// Stanley about the front axle: heading error plus
/// `atan(k·e / (v + v_soft))`, steering back toward the path.
pub fn stanley(
    state: &VehicleState,
    path: &WaypointPath,
    params: &StanleyParams,
    limits: &ActuatorLimits,
    hint: Option<f64>,
) -> Result<LateralOutput, ControlError> {
    let front = state.front_axle();
    let proj = project(path, &front, hint.map(|s| s + state.wheelbase))?;
    if !path.closed && proj.segment + 1 == path.segment_count() && proj.t >= 1.0 {
        return Err(ControlError::PathExhausted);
    }
    let heading_error = normalize_angle(proj.heading - state.pose.heading);
    let correction = -(params.k_gain * proj.offset / (state.speed.max(0.0) + params.v_soft)).atan();
    let steering = heading_error + correction;
    Ok(LateralOutput {
        steering: steering.clamp(-limits.max_steer, limits.max_steer),
        error: TrackingError {
            cross_track: proj.offset,
            heading_error,
            lookahead_point: [proj.point.x, proj.point.y],
        },
        projection: proj,
    })
}

/// Rear-axle cross-track error against `path`.
pub fn cross_track_error(pose: &Pose2D, path: &WaypointPath, hint: Option<f64>) -> Option<f64> {
    let window = hint.map(|s| (s, 8.0));
    path.project_window(Vector2::new(pose.x, pose.y), window).map(|p| p.offset)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LateralController {
    #[default]
    PurePursuit,
    Stanley,
}

impl LateralController {
    pub fn as_str(self) -> &'static str {
        match self {
            LateralController::PurePursuit => "pure_pursuit",
            LateralController::Stanley => "stanley",
        }
    }
}

impl FromStr for LateralController {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "pure_pursuit" => Ok(Self::PurePursuit),
            "stanley" => Ok(Self::Stanley),
            other => Err(format!("unknown controller '{other}' (expected pure_pursuit or stanley)")),
        }
    }
}

/// Steering-only command.
pub fn steering_command(steering: f64, acceleration: f64, timestamp: f64, limits: &ActuatorLimits) -> ControlCommand {
    limits.clamp(ControlCommand::new(steering, acceleration, timestamp))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planning::SpeedProfile;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, TAU};

    fn straight() -> WaypointPath {
        let pts = (0..200).map(|i| Vector2::new(i as f64 * 0.5 - 20.0, 0.0)).collect();
        WaypointPath::new(pts, false, &SpeedProfile::default())
    }

    fn state(x: f64, y: f64, h: f64, v: f64) -> VehicleState {
        VehicleState {
            speed: v,
            ..VehicleState::at_rest(Pose2D::new(x, y, h), 1.5)
        }
    }

    #[test]
    fn aligned_on_path_gives_zero() {
        let lim = ActuatorLimits::default();
        for v in [0.0, 1.0, 7.0, 20.0] {
            let s = state(0.0, 0.0, 0.0, v);
            assert_eq!(pure_pursuit(&s, &straight(), &PurePursuitParams::default(), &lim, None).unwrap().steering, 0.0);
            assert_eq!(stanley(&s, &straight(), &StanleyParams::default(), &lim, None).unwrap().steering, 0.0);
        }
    }

    #[test]
    fn closed_form_pure_pursuit() {
        // lookahead point straight to the left at 4 m
        let pts = vec![Vector2::new(0.0, 0.0), Vector2::new(0.0, 4.0), Vector2::new(0.0, 8.0)];
        let path = WaypointPath::new(pts, false, &SpeedProfile::default());
        let s = state(0.0, 0.0, 0.0, 0.0);
        let params = PurePursuitParams { k_lookahead: 0.5, l_min: 4.0 };
        let wide = ActuatorLimits {
            max_steer: 1.5,
            ..ActuatorLimits::default()
        };
        let out = pure_pursuit(&s, &path, &params, &wide, None).unwrap();
        let alpha = FRAC_PI_2;
        assert!((out.steering - (1.5 * 2.0 * alpha.sin() / 4.0f64).atan()).abs() < 1e-12);
        assert!((out.steering - 0.6435).abs() < 1e-4);
    }

    #[test]
    fn circle_tracking_curvature() {
        let r = 10.0;
        let pts = (0..400)
            .map(|i| {
                let a = i as f64 * TAU / 400.0;
                Vector2::new(r * a.cos(), r * a.sin())
            })
            .collect();
        let path = WaypointPath::new(pts, true, &SpeedProfile::default());
        let s = state(r, 0.0, FRAC_PI_2, 3.0);
        let out = pure_pursuit(&s, &path, &PurePursuitParams::default(), &ActuatorLimits::default(), None).unwrap();
        let curvature = out.steering.tan() / s.wheelbase;
        assert!((curvature * r - 1.0).abs() < 0.02, "{curvature}");
    }

    #[test]
    fn stanley_terms() {
        let lim = ActuatorLimits::default();
        let p = StanleyParams { k_gain: 1.0, v_soft: 0.5 };
        // heading error only: car yawed 0.1 rad right of the path, front axle on it
        let h = -0.1f64;
        let s = state(-1.5 * h.cos(), -1.5 * h.sin(), h, 2.0);
        let out = stanley(&s, &straight(), &p, &lim, None).unwrap();
        assert!((out.steering - 0.1).abs() < 1e-9);
        // cross-track only: front axle 1 m left of the path
        let s = state(-1.5, 1.0, 0.0, 1.5);
        let out = stanley(&s, &straight(), &p, &lim, None).unwrap();
        assert!((out.steering + 0.5f64.atan()).abs() < 1e-12);
        assert!((0.5f64.atan() - 0.4636).abs() < 1e-4);
    }

    #[test]
    fn exhausted_open_path() {
        let s = state(200.0, 0.0, 0.0, 3.0);
        let lim = ActuatorLimits::default();
        assert_eq!(
            pure_pursuit(&s, &straight(), &PurePursuitParams::default(), &lim, None),
            Err(ControlError::PathExhausted)
        );
        assert_eq!(stanley(&s, &straight(), &StanleyParams::default(), &lim, None), Err(ControlError::PathExhausted));
    }

    fn wiggle(mirror: f64) -> WaypointPath {
        let pts = (0..120)
            .map(|i| {
                let x = i as f64 * 0.5 - 10.0;
                Vector2::new(x, mirror * (1.5 * (x / 6.0).sin() + 0.02 * x))
            })
            .collect();
        WaypointPath::new(pts, false, &SpeedProfile::default())
    }

    proptest! {
        #[test]
        fn mirror_symmetry(x in -5.0f64..20.0, y in -2.0f64..2.0, h in -0.6f64..0.6, v in 0.0f64..10.0) {
            let lim = ActuatorLimits::default();
            let a = state(x, y, h, v);
            let b = state(x, -y, -h, v);
            let pa = pure_pursuit(&a, &wiggle(1.0), &PurePursuitParams::default(), &lim, None).unwrap().steering;
            let pb = pure_pursuit(&b, &wiggle(-1.0), &PurePursuitParams::default(), &lim, None).unwrap().steering;
            prop_assert!((pa + pb).abs() < 1e-9);
            let sa = stanley(&a, &wiggle(1.0), &StanleyParams::default(), &lim, None).unwrap().steering;
            let sb = stanley(&b, &wiggle(-1.0), &StanleyParams::default(), &lim, None).unwrap().steering;
            prop_assert!((sa + sb).abs() < 1e-9);
        }

        #[test]
        fn commands_within_limits(x in -30.0f64..60.0, y in -10.0f64..10.0, h in -3.2f64..3.2, v in 0.0f64..30.0) {
            let lim = ActuatorLimits::default();
            let s = state(x, y, h, v);
            if let Ok(o) = pure_pursuit(&s, &wiggle(1.0), &PurePursuitParams::default(), &lim, None) {
                prop_assert!(o.steering.abs() <= lim.max_steer);
                prop_assert!(o.error.heading_error > -std::f64::consts::PI && o.error.heading_error <= std::f64::consts::PI);
            }
            if let Ok(o) = stanley(&s, &wiggle(1.0), &StanleyParams::default(), &lim, None) {
                prop_assert!(o.steering.abs() <= lim.max_steer);
            }
        }
    }
}
