use std::fmt;

use nalgebra::{Isometry3, Matrix4, Point3, Quaternion, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Name of a coordinate frame, e.g. `world`, `ins_0`, `lidar_1`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FrameId(String);

impl FrameId {
    pub fn new(name: impl Into<String>) -> Self {
        FrameId(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for FrameId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for FrameId {
    fn from(s: &str) -> Self {
        FrameId(s.to_owned())
    }
}

impl From<String> for FrameId {
    fn from(s: String) -> Self {
        FrameId(s)
    }
}

impl From<&String> for FrameId {
    fn from(s: &String) -> Self {
        FrameId(s.clone())
    }
}

/// A rigid transform `target ← source`.
///
/// Applying it to a point expressed in `source_frame` yields the same point in
/// `target_frame`. Composition follows the usual matrix convention:
/// `a.compose(&b)` applies `b` first, so `b.target_frame` must equal
/// `a.source_frame`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TransformRepr", into = "TransformRepr")]
pub struct RigidTransform {
    iso: Isometry3<f64>,
    source_frame: FrameId,
    target_frame: FrameId,
}

impl RigidTransform {
    pub fn new(
        rotation: UnitQuaternion<f64>,
        translation: Vector3<f64>,
        source_frame: impl Into<FrameId>,
        target_frame: impl Into<FrameId>,
    ) -> Self {
        let mut rotation = rotation;
        rotation.renormalize();
        RigidTransform {
            iso: Isometry3::from_parts(Translation3::from(translation), rotation),
            source_frame: source_frame.into(),
            target_frame: target_frame.into(),
        }
    }

    pub fn from_isometry(
        iso: Isometry3<f64>,
        source_frame: impl Into<FrameId>,
        target_frame: impl Into<FrameId>,
    ) -> Self {
        Self::new(iso.rotation, iso.translation.vector, source_frame, target_frame)
    }

    /// Identity mapping `frame ← frame`.
    pub fn identity(frame: impl Into<FrameId>) -> Self {
        let frame = frame.into();
        RigidTransform {
            iso: Isometry3::identity(),
            source_frame: frame.clone(),
            target_frame: frame,
        }
    }

    /// Builds a transform from a raw quaternion `(w, x, y, z)`; the quaternion
    /// is normalized and must not be (near) zero.
    pub fn from_wxyz(
        wxyz: [f64; 4],
        translation: [f64; 3],
        source_frame: impl Into<FrameId>,
        target_frame: impl Into<FrameId>,
    ) -> Result<Self> {
        let q = Quaternion::new(wxyz[0], wxyz[1], wxyz[2], wxyz[3]);
        let norm = q.norm();
        if !norm.is_finite() || norm < 1e-12 {
            return Err(Error::InvalidGeometry(format!(
                "quaternion {wxyz:?} cannot be normalized"
            )));
        }
        if translation.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidGeometry(format!(
                "translation {translation:?} is not finite"
            )));
        }
        Ok(Self::new(
            UnitQuaternion::from_quaternion(q),
            Vector3::from(translation),
            source_frame,
            target_frame,
        ))
    }

    /// Rotation about +z by `yaw` radians followed by a translation.
    pub fn from_yaw(
        yaw: f64,
        translation: Vector3<f64>,
        source_frame: impl Into<FrameId>,
        target_frame: impl Into<FrameId>,
    ) -> Self {
        Self::new(
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw),
            translation,
            source_frame,
            target_frame,
        )
    }

    pub fn isometry(&self) -> &Isometry3<f64> {
        &self.iso
    }

    pub fn rotation(&self) -> &UnitQuaternion<f64> {
        &self.iso.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.iso.translation.vector
    }

    pub fn source_frame(&self) -> &FrameId {
        &self.source_frame
    }

    pub fn target_frame(&self) -> &FrameId {
        &self.target_frame
    }

    /// Same geometry with different frame labels.
    pub fn relabel(mut self, source_frame: impl Into<FrameId>, target_frame: impl Into<FrameId>) -> Self {
        self.source_frame = source_frame.into();
        self.target_frame = target_frame.into();
        self
    }

    /// `self ∘ other`: maps `other.source_frame` into `self.target_frame`.
    pub fn compose(&self, other: &RigidTransform) -> Result<RigidTransform> {
        if other.target_frame != self.source_frame {
            return Err(Error::FrameMismatch {
                left: self.source_frame.to_string(),
                right: other.target_frame.to_string(),
            });
        }
        let mut iso = self.iso * other.iso;
        iso.rotation.renormalize_fast();
        Ok(RigidTransform {
            iso,
            source_frame: other.source_frame.clone(),
            target_frame: self.target_frame.clone(),
        })
    }

    pub fn inverse(&self) -> RigidTransform {
        RigidTransform {
            iso: self.iso.inverse(),
            source_frame: self.target_frame.clone(),
            target_frame: self.source_frame.clone(),
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.iso.transform_point(&Point3::from(*p)).coords
    }

    pub fn transform_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.iso.rotation * v
    }

    /// Homogeneous 4×4 matrix form.
    pub fn to_matrix(&self) -> Matrix4<f64> {
        self.iso.to_homogeneous()
    }

    /// Rotation angle (radians) of the relative transform `self⁻¹ ∘ other`.
    pub fn angle_to(&self, other: &RigidTransform) -> f64 {
        self.iso.rotation.angle_to(&other.iso.rotation)
    }

    /// Translation distance (meters) between the two transforms' origins.
    pub fn distance_to(&self, other: &RigidTransform) -> f64 {
        (self.translation() - other.translation()).norm()
    }

    pub fn wxyz(&self) -> [f64; 4] {
        let q = self.iso.rotation.quaternion();
        [q.w, q.i, q.j, q.k]
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TransformRepr {
    source_frame: FrameId,
    target_frame: FrameId,
    /// `[w, x, y, z]`
    rotation: [f64; 4],
    translation: [f64; 3],
}

impl TryFrom<TransformRepr> for RigidTransform {
    type Error = Error;

    fn try_from(r: TransformRepr) -> Result<Self> {
        RigidTransform::from_wxyz(r.rotation, r.translation, r.source_frame, r.target_frame)
    }
}

impl From<RigidTransform> for TransformRepr {
    fn from(t: RigidTransform) -> Self {
        let v = t.translation();
        TransformRepr {
            rotation: t.wxyz(),
            translation: [v.x, v.y, v.z],
            source_frame: t.source_frame,
            target_frame: t.target_frame,
        }
    }
}

/// Composes transforms left to right: `chain([a, b, c]) = a ∘ b ∘ c`.
pub fn chain<'a>(transforms: impl IntoIterator<Item = &'a RigidTransform>) -> Result<RigidTransform> {
    let mut iter = transforms.into_iter();
    let first = iter
        .next()
        .ok_or_else(|| Error::InvalidGeometry("empty transform chain".into()))?
        .clone();
    iter.try_fold(first, |acc, t| acc.compose(t))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(seed: f64) -> RigidTransform {
        RigidTransform::new(
            UnitQuaternion::from_euler_angles(0.3 * seed, -0.2, 1.1 * seed),
            Vector3::new(1.0, -2.0 * seed, 0.5),
            "a",
            "a",
        )
    }

    #[test]
    fn identity_composes_to_identity() {
        let id = RigidTransform::identity("x");
        let r = id.compose(&id).unwrap();
        assert_eq!(r.translation().norm(), 0.0);
        assert_eq!(r.rotation().angle(), 0.0);
    }

    #[test]
    fn pure_translation_inverse() {
        let t = RigidTransform::new(UnitQuaternion::identity(), Vector3::new(1.0, 2.0, 3.0), "s", "t");
        let inv = t.inverse();
        assert_eq!(*inv.translation(), Vector3::new(-1.0, -2.0, -3.0));
        assert_eq!(inv.source_frame().as_str(), "t");
        assert_eq!(inv.target_frame().as_str(), "s");
    }

    #[test]
    fn compose_rejects_unchained_frames() {
        let a = RigidTransform::identity("lidar");
        let b = RigidTransform::identity("ins");
        let err = a.compose(&b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("lidar") && msg.contains("ins"), "{msg}");
    }

    #[test]
    fn inverse_round_trip() {
        let t = sample(0.7);
        let id = t.compose(&t.inverse()).unwrap();
        assert!(id.translation().norm() < 1e-9);
        assert!(id.rotation().angle() < 1e-9);
    }

    #[test]
    fn zero_quaternion_rejected() {
        assert!(RigidTransform::from_wxyz([0.0; 4], [0.0; 3], "a", "b").is_err());
    }

    #[test]
    fn serde_shape() {
        let t = sample(0.4).relabel("lidar_0", "ins_0");
        let json = serde_json::to_value(&t).unwrap();
        assert_eq!(json["source_frame"], "lidar_0");
        assert_eq!(json["rotation"].as_array().unwrap().len(), 4);
        let back: RigidTransform = serde_json::from_value(json).unwrap();
        assert!(back.distance_to(&t) < 1e-15);
        assert!(back.angle_to(&t) < 1e-12);
    }
}
