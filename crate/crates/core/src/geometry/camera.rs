use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::GeometryError;

/// Depth below which a point is treated as lying on or behind the image plane.
pub const EPSILON_Z: f64 = 1e-6;

const UNDISTORT_ITERATIONS: usize = 10;

/// Pixel coordinate, `u` to the right and `v` down.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pixel {
    pub u: f64,
    pub v: f64,
}

impl Pixel {
    pub fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    pub fn to_vector(self) -> Vector2<f64> {
        Vector2::new(self.u, self.v)
    }

    pub fn distance(&self, other: &Pixel) -> f64 {
        (self.u - other.u).hypot(self.v - other.v)
    }
}

/// Radial-tangential lens distortion (k1, k2, k3 radial; p1, p2 tangential).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Distortion {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub p1: f64,
    pub p2: f64,
}

impl Distortion {
    pub fn is_zero(&self) -> bool {
        self.k1 == 0.0 && self.k2 == 0.0 && self.k3 == 0.0 && self.p1 == 0.0 && self.p2 == 0.0
    }

    /// Distorts a normalized image coordinate.
    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let r2 = x * x + y * y;
        let radial = 1.0 + r2 * (self.k1 + r2 * (self.k2 + r2 * self.k3));
        let xd = x * radial + 2.0 * self.p1 * x * y + self.p2 * (r2 + 2.0 * x * x);
        let yd = y * radial + self.p1 * (r2 + 2.0 * y * y) + 2.0 * self.p2 * x * y;
        (xd, yd)
    }

    /// Inverts [`Distortion::apply`] by fixed-point iteration.
    pub fn remove(&self, xd: f64, yd: f64) -> (f64, f64) {
        if self.is_zero() {
            return (xd, yd);
        }
        let (mut x, mut y) = (xd, yd);
        for _ in 0..UNDISTORT_ITERATIONS {
            let r2 = x * x + y * y;
            let radial = 1.0 + r2 * (self.k1 + r2 * (self.k2 + r2 * self.k3));
            let dx = 2.0 * self.p1 * x * y + self.p2 * (r2 + 2.0 * x * x);
            let dy = self.p1 * (r2 + 2.0 * y * y) + 2.0 * self.p2 * x * y;
            x = (xd - dx) / radial;
            y = (yd - dy) / radial;
        }
        (x, y)
    }
}

/// Pinhole intrinsics. Camera frame: x right, y down, z along the optical axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub image_width: f64,
    pub image_height: f64,
    pub distortion: Distortion,
}

impl CameraIntrinsics {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        image_width: f64,
        image_height: f64,
        distortion: Distortion,
    ) -> Result<Self, GeometryError> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            image_width,
            image_height,
            distortion,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "focal lengths must be positive (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if !(self.cx > 0.0 && self.cx < self.image_width) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "cx={} outside (0, {})",
                self.cx, self.image_width
            )));
        }
        if !(self.cy > 0.0 && self.cy < self.image_height) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "cy={} outside (0, {})",
                self.cy, self.image_height
            )));
        }
        Ok(())
    }

    pub fn contains(&self, px: &Pixel) -> bool {
        px.u >= 0.0 && px.u <= self.image_width && px.v >= 0.0 && px.v <= self.image_height
    }

    /// Normalized (undistorted) coordinate of a pixel.
    pub fn normalize(&self, px: &Pixel) -> (f64, f64) {
        let xd = (px.u - self.cx) / self.fx;
        let yd = (px.v - self.cy) / self.fy;
        self.distortion.remove(xd, yd)
    }
}

/// Projects a camera-frame point to pixels, applying lens distortion.
pub fn project_point(p_cam: &Vector3<f64>, k: &CameraIntrinsics) -> Result<Pixel, GeometryError> {
    if p_cam.z <= EPSILON_Z {
        return Err(GeometryError::Behind { z: p_cam.z });
    }
    let x = p_cam.x / p_cam.z;
    let y = p_cam.y / p_cam.z;
    let (xd, yd) = k.distortion.apply(x, y);
    Ok(Pixel::new(k.fx * xd + k.cx, k.fy * yd + k.cy))
}

/// Normalized undistorted coordinates of a distorted pixel.
pub fn undistort_pixel(px: &Pixel, k: &CameraIntrinsics) -> Vector2<f64> {
    let (x, y) = k.normalize(px);
    Vector2::new(x, y)
}

/// Camera-frame point seen at `px` with optical-axis depth `depth`.
pub fn back_project(px: &Pixel, depth: f64, k: &CameraIntrinsics) -> Vector3<f64> {
    let (x, y) = k.normalize(px);
    Vector3::new(x * depth, y * depth, depth)
}
