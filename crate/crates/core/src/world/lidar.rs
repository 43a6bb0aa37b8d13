//! Ray-cast LiDAR against the ground plane and cone frusta.

use nalgebra::{Vector2, Vector3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::track::{TrackCone, TrackDefinition};
use super::vehicle::VehicleState;
use crate::geometry::{ConeGeometry, LidarPoint, PointCloud, RigidTransform3D};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LidarNoise {
    pub range_sigma: f64,
    /// Per-return dropout probability.
    pub dropout: f64,
}

impl LidarNoise {
    pub fn off() -> Self {
        Self {
            range_sigma: 0.0,
            dropout: 0.0,
        }
    }
}

impl Default for LidarNoise {
    fn default() -> Self {
        Self {
            range_sigma: 0.02,
            dropout: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LidarConfig {
    /// Sensor position in the vehicle frame (x forward, y left, z up from the ground).
    pub mount: Vector3<f64>,
    pub elevation_min_deg: f64,
    pub elevation_step_deg: f64,
    pub rings: u8,
    pub azimuth_step_deg: f64,
    pub max_range: f64,
    pub min_range: f64,
}

impl Default for LidarConfig {
    fn default() -> Self {
        Self {
            mount: Vector3::new(1.6, 0.0, 0.4),
            elevation_min_deg: -15.0,
            elevation_step_deg: 2.0,
            rings: 16,
            azimuth_step_deg: 0.4,
            max_range: 30.0,
            min_range: 0.3,
        }
    }
}

impl LidarConfig {
    /// Maps LiDAR coordinates into the vehicle frame.
    pub fn vehicle_from_lidar(&self) -> RigidTransform3D {
        RigidTransform3D::from_translation(self.mount)
    }

    pub fn elevation(&self, ring: u8) -> f64 {
        (self.elevation_min_deg + ring as f64 * self.elevation_step_deg).to_radians()
    }

    pub fn azimuth_count(&self) -> usize {
        (360.0 / self.azimuth_step_deg).round() as usize
    }
}

const CONE_INTENSITY: f64 = 0.8;
const GROUND_INTENSITY: f64 = 0.1;

/// A frustum expressed in the sensor frame.
struct Frustum {
    base: Vector3<f64>,
    axis: Vector3<f64>,
    height: f64,
    base_radius: f64,
    top_radius: f64,
}

impl Frustum {
    fn from_cone(cone: &TrackCone, vehicle_heading: f64, sensor_xy: Vector2<f64>, sensor_z: f64) -> Self {
        let g = ConeGeometry::for_class(cone.class);
        let rel = Vector2::new(cone.x, cone.y) - sensor_xy;
        let (s, c) = vehicle_heading.sin_cos();
        let local = Vector2::new(c * rel.x + s * rel.y, -s * rel.x + c * rel.y);
        let (base, axis) = if cone.fallen {
            let yaw = cone.y.atan2(cone.x) + std::f64::consts::FRAC_PI_2 - vehicle_heading;
            (
                Vector3::new(local.x, local.y, g.base_radius() - sensor_z),
                Vector3::new(yaw.cos(), yaw.sin(), 0.0),
            )
        } else {
            (Vector3::new(local.x, local.y, -sensor_z), Vector3::z())
        };
        Self {
            base,
            axis,
            height: g.height,
            base_radius: g.base_radius(),
            top_radius: g.top_radius(),
        }
    }

    fn bounding_radius(&self) -> f64 {
        self.height.max(self.base_radius)
    }

    /// Smallest positive ray parameter hitting the frustum surface or caps.
    fn intersect(&self, d: &Vector3<f64>) -> Option<f64> {
        let w0 = -self.base;
        let k = (self.base_radius - self.top_radius) / self.height;
        let s0 = w0.dot(&self.axis);
        let sd = d.dot(&self.axis);
        let q = self.base_radius - k * s0;
        let a = d.norm_squared() - sd * sd * (1.0 + k * k);
        let b = 2.0 * (w0.dot(d) - s0 * sd + q * k * sd);
        let c = w0.norm_squared() - s0 * s0 - q * q;
        let mut best: Option<f64> = None;
        let mut consider = |t: f64| {
            if t > 1e-9 && best.map_or(true, |b| t < b) {
                best = Some(t);
            }
        };
        if a.abs() > 1e-15 {
            let disc = b * b - 4.0 * a * c;
            if disc >= 0.0 {
                let sq = disc.sqrt();
                for t in [(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)] {
                    let s = s0 + t * sd;
                    if (0.0..=self.height).contains(&s) {
                        consider(t);
                    }
                }
            }
        }
        if sd.abs() > 1e-15 {
            for (s_cap, r_cap) in [(self.height, self.top_radius), (0.0, self.base_radius)] {
                let t = (s_cap - s0) / sd;
                let p = w0 + d * t;
                let radial = p - self.axis * p.dot(&self.axis);
                if radial.norm() <= r_cap {
                    consider(t);
                }
            }
        }
        best
    }
}

/// Simulates one LiDAR sweep. Points are returned in the sensor frame.
///
/// Cones are binned by azimuth so each ray is only tested against nearby frusta.
pub fn simulate_lidar(
    world: &TrackDefinition,
    vehicle: &VehicleState,
    config: &LidarConfig,
    noise: &LidarNoise,
    rng: &mut ChaCha8Rng,
) -> PointCloud {
    let pose = vehicle.pose;
    let sensor_xy = pose.transform_point(Vector2::new(config.mount.x, config.mount.y));
    let sensor_z = config.mount.z;
    let n_az = config.azimuth_count();
    let az_step = config.azimuth_step_deg.to_radians();

    let frusta: Vec<Frustum> = world
        .cones
        .iter()
        .filter(|c| (Vector2::new(c.x, c.y) - sensor_xy).norm() < config.max_range + 1.0)
        .map(|c| Frustum::from_cone(c, pose.heading, sensor_xy, sensor_z))
        .collect();
    let mut bins: Vec<Vec<usize>> = vec![Vec::new(); n_az];
    for (i, f) in frusta.iter().enumerate() {
        let horizontal = Vector2::new(f.base.x, f.base.y);
        let dist = horizontal.norm();
        let half = if dist <= f.bounding_radius() + 1e-6 {
            std::f64::consts::PI
        } else {
            (f.bounding_radius() / dist).asin() + az_step
        };
        let centre = horizontal.y.atan2(horizontal.x);
        let lo = ((centre - half) / az_step).floor() as i64;
        let hi = ((centre + half) / az_step).ceil() as i64;
        let span = (hi - lo).min(n_az as i64 - 1);
        for j in lo..=lo + span {
            bins[j.rem_euclid(n_az as i64) as usize].push(i);
        }
    }

    let normal = Normal::new(0.0, noise.range_sigma.max(0.0)).expect("valid sigma");
    let mut points = Vec::new();
    for ring in 0..config.rings {
        let el = config.elevation(ring);
        let (se, ce) = el.sin_cos();
        for (ai, bin) in bins.iter().enumerate() {
            let az = ai as f64 * az_step;
            let d = Vector3::new(ce * az.cos(), ce * az.sin(), se);
            let mut hit: Option<(f64, bool)> = None;
            if se < 0.0 {
                hit = Some((sensor_z / -se, true));
            }
            for &fi in bin {
                if let Some(t) = frusta[fi].intersect(&d) {
                    if hit.map_or(true, |(h, _)| t < h) {
                        hit = Some((t, false));
                    }
                }
            }
            let Some((t, ground)) = hit else { continue };
            if t > config.max_range || t < config.min_range {
                continue;
            }
            if noise.dropout > 0.0 && rng.gen::<f64>() < noise.dropout {
                continue;
            }
            let (p, intensity) = if noise.range_sigma > 0.0 {
                let r = t + normal.sample(rng);
                (d * r, if ground { GROUND_INTENSITY } else { CONE_INTENSITY })
            } else if ground {
                (Vector3::new(d.x * t, d.y * t, -sensor_z), GROUND_INTENSITY)
            } else {
                (d * t, CONE_INTENSITY)
            };
            points.push(LidarPoint::new(p, ring, intensity));
        }
    }
    PointCloud::new(points).expect("rings are below 16")
}
