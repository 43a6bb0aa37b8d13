use nalgebra::{Matrix3, Rotation3, Vector3};

use super::GeometryError;

const ORTHONORMAL_TOL: f64 = 1e-9;

/// Rigid body transform `p ↦ R·p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform3D {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl RigidTransform3D {
    /// Builds a transform, rejecting rotations that are not orthonormal with
    /// determinant +1 to within `1e-9`.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        let deviation = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        let det_dev = (rotation.determinant() - 1.0).abs();
        let worst = deviation.max(det_dev);
        if !worst.is_finite() || worst > ORTHONORMAL_TOL {
            return Err(GeometryError::InvalidRotation { deviation: worst });
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub(crate) fn from_rotation_unchecked(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::from_rotation_unchecked(Matrix3::identity(), Vector3::zeros())
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self::from_rotation_unchecked(Matrix3::identity(), translation)
    }

    /// Rotation of `yaw` radians about +z followed by `translation`.
    pub fn from_yaw(yaw: f64, translation: Vector3<f64>) -> Self {
        let r = Rotation3::from_axis_angle(&Vector3::z_axis(), yaw);
        Self::from_rotation_unchecked(*r.matrix(), translation)
    }

    /// Rotation from an axis-angle vector (Rodrigues) followed by `translation`.
    pub fn from_axis_angle(axis_angle: Vector3<f64>, translation: Vector3<f64>) -> Self {
        let r = Rotation3::new(axis_angle);
        Self::from_rotation_unchecked(*r.matrix(), translation)
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn apply_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &RigidTransform3D) -> RigidTransform3D {
        Self::from_rotation_unchecked(
            self.rotation * other.rotation,
            self.rotation * other.translation + self.translation,
        )
    }

    pub fn inverse(&self) -> RigidTransform3D {
        let rt = self.rotation.transpose();
        Self::from_rotation_unchecked(rt, -(rt * self.translation))
    }

    /// Angle of the relative rotation between two transforms, radians.
    pub fn rotation_angle_to(&self, other: &RigidTransform3D) -> f64 {
        let rel = self.rotation.transpose() * other.rotation;
        let c = ((rel.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
        c.acos()
    }
}

impl Default for RigidTransform3D {
    fn default() -> Self {
        Self::identity()
    }
}
