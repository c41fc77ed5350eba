use nalgebra::{Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use super::transform::{FrameId, RigidTransform};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectClass {
    Car,
    Truck,
    Pedestrian,
    Cyclist,
    Building,
}

/// Oriented 3D box: yaw about the declared frame's +z axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Box3D {
    pub center: Vector3<f64>,
    /// length (along heading), width, height
    pub dimensions: Vector3<f64>,
    pub yaw: f64,
    pub object_id: u64,
    pub class_label: ObjectClass,
    pub frame: FrameId,
}

impl Box3D {
    pub fn new(
        center: Vector3<f64>,
        dimensions: Vector3<f64>,
        yaw: f64,
        object_id: u64,
        class_label: ObjectClass,
        frame: impl Into<FrameId>,
    ) -> Result<Self> {
        if dimensions.iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
            return Err(Error::InvalidGeometry(format!(
                "box {object_id} dimensions must be positive, got {dimensions:?}"
            )));
        }
        Ok(Box3D {
            center,
            dimensions,
            yaw,
            object_id,
            class_label,
            frame: frame.into(),
        })
    }

    fn half_extent(&self) -> Vector3<f64> {
        self.dimensions * 0.5
    }

    /// The eight corners in the box's declared frame.
    pub fn corners(&self) -> [Vector3<f64>; 8] {
        let rot = Rotation3::from_axis_angle(&Vector3::z_axis(), self.yaw);
        let h = self.half_extent();
        let mut out = [Vector3::zeros(); 8];
        let mut i = 0;
        for sx in [-1.0, 1.0] {
            for sy in [-1.0, 1.0] {
                for sz in [-1.0, 1.0] {
                    out[i] = self.center + rot * Vector3::new(sx * h.x, sy * h.y, sz * h.z);
                    i += 1;
                }
            }
        }
        out
    }

    /// Point test with an isotropic inflation margin (meters).
    pub fn contains(&self, p: &Vector3<f64>, margin: f64) -> bool {
        let rot = Rotation3::from_axis_angle(&Vector3::z_axis(), -self.yaw);
        let local = rot * (p - self.center);
        let h = self.half_extent();
        local.x.abs() <= h.x + margin && local.y.abs() <= h.y + margin && local.z.abs() <= h.z + margin
    }

    /// Re-express the box through `t` (which must map from the box frame).
    /// Only the heading survives the rotation; roll/pitch of `t` is dropped.
    pub fn transformed(&self, t: &RigidTransform) -> Result<Box3D> {
        if t.source_frame() != &self.frame {
            return Err(Error::FrameMismatch {
                left: t.source_frame().to_string(),
                right: self.frame.to_string(),
            });
        }
        let heading = t.transform_vector(&Vector3::new(self.yaw.cos(), self.yaw.sin(), 0.0));
        Ok(Box3D {
            center: t.transform_point(&self.center),
            yaw: heading.y.atan2(heading.x),
            frame: t.target_frame().clone(),
            ..self.clone()
        })
    }
}

/// Axis-aligned image box in continuous pixel coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Box2D {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Box2D {
    pub fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Result<Self> {
        if !(max_x > min_x && max_y > min_y) {
            return Err(Error::InvalidGeometry(format!(
                "degenerate 2D box ({min_x}, {min_y}, {max_x}, {max_y})"
            )));
        }
        Ok(Box2D {
            min_x,
            min_y,
            max_x,
            max_y,
        })
    }

    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        (0.5 * (self.min_x + self.max_x), 0.5 * (self.min_y + self.max_y))
    }

    pub fn intersection_area(&self, other: &Box2D) -> f64 {
        let w = self.max_x.min(other.max_x) - self.min_x.max(other.min_x);
        let h = self.max_y.min(other.max_y) - self.min_y.max(other.min_y);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }
}
