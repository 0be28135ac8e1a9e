use nalgebra::{Matrix3, Quaternion, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::Vec3;

/// A rigid motion `x -> R x + t` with the rotation stored as a unit quaternion.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "PoseRecord", from = "PoseRecord")]
pub struct RigidTransform {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vec3,
}

/// Wire format: quaternion as `[w, x, y, z]`, translation in meters.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PoseRecord {
    pub quaternion: [f64; 4],
    pub translation: [f64; 3],
}

impl From<RigidTransform> for PoseRecord {
    fn from(t: RigidTransform) -> Self {
        let q = t.rotation.quaternion();
        PoseRecord {
            quaternion: [q.w, q.i, q.j, q.k],
            translation: [t.translation.x, t.translation.y, t.translation.z],
        }
    }
}

impl From<PoseRecord> for RigidTransform {
    fn from(r: PoseRecord) -> Self {
        let [w, x, y, z] = r.quaternion;
        let q = Quaternion::new(w, x, y, z);
        // Keep stored unit quaternions bit-exact; normalize anything else.
        let rotation = if (q.norm() - 1.0).abs() < 1e-12 {
            UnitQuaternion::new_unchecked(q)
        } else {
            UnitQuaternion::from_quaternion(q)
        };
        RigidTransform {
            rotation,
            translation: Vector3::from(r.translation),
        }
    }
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        RigidTransform {
            rotation: UnitQuaternion::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn new(rotation: UnitQuaternion<f64>, translation: Vec3) -> Self {
        RigidTransform {
            rotation,
            translation,
        }
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Self::new(UnitQuaternion::identity(), Vec3::new(x, y, z))
    }

    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        let rotation = match Unit::try_new(axis, 1e-12) {
            Some(axis) => UnitQuaternion::from_axis_angle(&axis, angle),
            None => UnitQuaternion::identity(),
        };
        Self::new(rotation, Vec3::zeros())
    }

    pub fn from_rotation_matrix(m: &Matrix3<f64>, translation: Vec3) -> Self {
        let rot = nalgebra::Rotation3::from_matrix_unchecked(*m);
        Self::new(UnitQuaternion::from_rotation_matrix(&rot), translation)
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        *self.rotation.to_rotation_matrix().matrix()
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let inv = self.rotation.inverse();
        RigidTransform {
            rotation: inv,
            translation: -(inv * self.translation),
        }
    }

    #[inline]
    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    #[inline]
    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    /// Geodesic angle (radians, in `[0, π]`) between the two rotations.
    pub fn rotation_distance(&self, other: &RigidTransform) -> f64 {
        self.rotation.angle_to(&other.rotation)
    }

    pub fn translation_distance(&self, other: &RigidTransform) -> f64 {
        (self.translation - other.translation).norm()
    }

    /// Re-normalizes the quaternion; useful after long chains of compositions.
    pub fn renormalized(&self) -> RigidTransform {
        RigidTransform {
            rotation: UnitQuaternion::new_normalize(*self.rotation.quaternion()),
            translation: self.translation,
        }
    }
}

/// Applies `b` then `a`.
pub fn compose(a: &RigidTransform, b: &RigidTransform) -> RigidTransform {
    a.compose(b)
}
