use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::vehicle::VehicleState;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdomNoise {
    pub sigma_v: f64,
    pub sigma_omega: f64,
    pub bias_v: f64,
    pub bias_omega: f64,
    pub enabled: bool,
}

impl OdomNoise {
    pub fn off() -> Self {
        Self {
            enabled: false,
            ..Self::default()
        }
    }
}

impl Default for OdomNoise {
    fn default() -> Self {
        Self {
            sigma_v: 0.05,
            sigma_omega: 0.01,
            bias_v: 0.0,
            bias_omega: 0.0,
            enabled: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdometrySample {
    pub timestamp: f64,
    pub speed: f64,
    pub yaw_rate: f64,
    pub noise_applied: bool,
}

/// One odometry reading. Biases apply even when random noise is disabled.
pub fn simulate_odometry(vehicle: &VehicleState, noise: &OdomNoise, t: f64, rng: &mut ChaCha8Rng) -> OdometrySample {
    let mut speed = vehicle.speed + noise.bias_v;
    let mut yaw_rate = vehicle.yaw_rate + noise.bias_omega;
    if noise.enabled {
        if noise.sigma_v > 0.0 {
            speed += Normal::new(0.0, noise.sigma_v).expect("valid sigma").sample(rng);
        }
        if noise.sigma_omega > 0.0 {
            yaw_rate += Normal::new(0.0, noise.sigma_omega).expect("valid sigma").sample(rng);
        }
    }
    OdometrySample {
        timestamp: t,
        speed,
        yaw_rate,
        noise_applied: noise.enabled,
    }
}

/// Odometry stream that enforces strictly increasing timestamps.
#[derive(Debug, Clone)]
pub struct Odometer {
    noise: OdomNoise,
    rng: ChaCha8Rng,
    last: Option<f64>,
}

impl Odometer {
    pub fn new(noise: OdomNoise, rng: ChaCha8Rng) -> Self {
        Self { noise, rng, last: None }
    }

    pub fn sample(&mut self, vehicle: &VehicleState, t: f64) -> Option<OdometrySample> {
        if self.last.is_some_and(|l| t <= l) {
            return None;
        }
        self.last = Some(t);
        Some(simulate_odometry(vehicle, &self.noise, t, &mut self.rng))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pose2D;
    use crate::world::rng::{stream_rng, Stream};

    fn truth() -> VehicleState {
        VehicleState {
            speed: 6.0,
            yaw_rate: 0.3,
            ..VehicleState::at_rest(Pose2D::identity(), 1.53)
        }
    }

    #[test]
    fn noise_off_is_exact() {
        let s = simulate_odometry(&truth(), &OdomNoise::off(), 1.0, &mut stream_rng(0, Stream::Odometry, 0));
        assert_eq!(s.speed, 6.0);
        assert_eq!(s.yaw_rate, 0.3);
        assert!(!s.noise_applied);
    }

    #[test]
    fn bias_is_additive() {
        let noise = OdomNoise {
            bias_v: 0.1,
            ..OdomNoise::off()
        };
        let s = simulate_odometry(&truth(), &noise, 1.0, &mut stream_rng(0, Stream::Odometry, 0));
        assert_eq!(s.speed, 6.0 + 0.1);
    }

    #[test]
    fn mean_within_standard_error() {
        let mut rng = stream_rng(5, Stream::Odometry, 0);
        let n = 10_000;
        let noise = OdomNoise::default();
        let mean = (0..n)
            .map(|i| simulate_odometry(&truth(), &noise, i as f64, &mut rng).speed)
            .sum::<f64>()
            / n as f64;
        assert!((mean - 6.0).abs() < 3.0 * 0.05 / (n as f64).sqrt());
    }

    #[test]
    fn odometer_rejects_stale_timestamps() {
        let mut odo = Odometer::new(OdomNoise::default(), stream_rng(0, Stream::Odometry, 0));
        assert!(odo.sample(&truth(), 0.1).is_some());
        assert!(odo.sample(&truth(), 0.1).is_none());
        assert!(odo.sample(&truth(), 0.2).is_some());
    }
}
