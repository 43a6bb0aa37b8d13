use std::f64::consts::{PI, TAU};

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

/// Wraps an angle into `(-π, π]`. An input of exactly `±π` maps to `π`.
pub fn normalize_angle(angle: f64) -> f64 {
    let r = angle.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// Planar pose in the ground frame. Heading is kept in `(-π, π]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl Pose2D {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self {
            x,
            y,
            heading: normalize_angle(heading),
        }
    }

    pub fn identity() -> Self {
        Self::default()
    }

    pub fn position(&self) -> Vector2<f64> {
        Vector2::new(self.x, self.y)
    }

    /// `self ⊕ other`: applies `other`, expressed in this pose's frame.
    pub fn compose(&self, other: &Pose2D) -> Pose2D {
        let (s, c) = self.heading.sin_cos();
        Pose2D::new(
            self.x + c * other.x - s * other.y,
            self.y + s * other.x + c * other.y,
            self.heading + other.heading,
        )
    }

    pub fn inverse(&self) -> Pose2D {
        let (s, c) = self.heading.sin_cos();
        Pose2D::new(
            -c * self.x - s * self.y,
            s * self.x - c * self.y,
            -self.heading,
        )
    }

    /// `self⁻¹ ⊕ other`: `other` expressed in this pose's frame.
    pub fn relative_to(&self, other: &Pose2D) -> Pose2D {
        self.inverse().compose(other)
    }

    /// Maps a point from this pose's local frame into the parent frame.
    pub fn transform_point(&self, local: Vector2<f64>) -> Vector2<f64> {
        let (s, c) = self.heading.sin_cos();
        Vector2::new(
            self.x + c * local.x - s * local.y,
            self.y + s * local.x + c * local.y,
        )
    }

    /// Maps a parent-frame point into this pose's local frame.
    pub fn inverse_transform_point(&self, world: Vector2<f64>) -> Vector2<f64> {
        let (s, c) = self.heading.sin_cos();
        let d = world - self.position();
        Vector2::new(c * d.x + s * d.y, -s * d.x + c * d.y)
    }

    pub fn distance_to(&self, other: &Pose2D) -> f64 {
        (self.position() - other.position()).norm()
    }
}
