use super::ActuatorLimits;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
}

impl Default for PidGains {
    fn default() -> Self {
        Self {
            kp: 1.0,
            ki: 0.2,
            kd: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PidState {
    pub integral: f64,
    pub prev_measured: Option<f64>,
}

/// Speed PID with derivative on measurement. The controller output is a
/// pedal position in [-1, 1] scaled to the brake or throttle limit. The
/// integrator only moves while the pedal is unsaturated or the error pulls it
/// back out of saturation.
pub fn pid_speed(target: f64, measured: f64, state: PidState, dt: f64, gains: &PidGains, limits: &ActuatorLimits) -> (f64, PidState) {
    assert!(dt > 0.0, "dt must be positive, got {dt}");
    let error = target - measured;
    let derivative = state.prev_measured.map_or(0.0, |prev| -(measured - prev) / dt);
    let (lo, hi) = (-1.0, 1.0);

    let trial_integral = state.integral + error * dt;
    let trial = gains.kp * error + gains.ki * trial_integral + gains.kd * derivative;
    let integral = if (trial > hi && error > 0.0) || (trial < lo && error < 0.0) {
        state.integral
    } else {
        trial_integral
    };
    let pedal = (gains.kp * error + gains.ki * integral + gains.kd * derivative).clamp(lo, hi);
    let accel = if pedal >= 0.0 { pedal * limits.max_accel } else { pedal * limits.max_brake };
    (
        accel,
        PidState {
            integral,
            prev_measured: Some(measured),
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::ControlCommand;
    use crate::geometry::Pose2D;
    use crate::world::{step_vehicle, VehicleParams, VehicleState};

    #[test]
    fn zero_error_zero_output() {
        let (u, _) = pid_speed(3.0, 3.0, PidState::default(), 0.02, &PidGains::default(), &ActuatorLimits::default());
        assert_eq!(u, 0.0);
    }

    #[test]
    fn saturated_integrator_holds() {
        let lim = ActuatorLimits::default();
        let mut s = PidState::default();
        for _ in 0..100 {
            let (u, next) = pid_speed(100.0, 0.0, s, 0.02, &PidGains::default(), &lim);
            assert_eq!(u, lim.max_accel);
            assert_eq!(next.integral, 0.0);
            s = next;
        }
    }

    #[test]
    fn step_response_settles() {
        let params = VehicleParams::default();
        let mut v = VehicleState::at_rest(Pose2D::identity(), params.wheelbase);
        let mut s = PidState::default();
        let dt = 0.02;
        let mut peak: f64 = 0.0;
        let mut last_outside = 0.0;
        for k in 0..500 {
            let t = k as f64 * dt;
            let (u, next) = pid_speed(5.0, v.speed, s, dt, &PidGains::default(), &params.limits);
            s = next;
            v = step_vehicle(&v, &ControlCommand::new(0.0, u, t), dt, &params.limits);
            peak = peak.max(v.speed);
            if (v.speed - 5.0).abs() > 0.1 {
                last_outside = t + dt;
            }
        }
        assert!(last_outside <= 5.0, "settled at {last_outside}");
        assert!(peak <= 5.5, "overshoot {peak}");
    }
}
