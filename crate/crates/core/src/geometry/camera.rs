use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::boxes::{Box2D, Box3D};
use super::transform::RigidTransform;
use crate::error::{Error, Result};

/// Points closer than this along the optical axis are not projected.
pub const NEAR_PLANE: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

/// Ideal pinhole camera (no distortion). Camera axes: +z optical axis,
/// +x right, +y down.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraModel {
    pub id: String,
    pub intrinsics: Intrinsics,
    pub width: u32,
    pub height: u32,
    /// `camera ← lidar`
    pub extrinsic: RigidTransform,
    pub horizontal_fov: f64,
    pub frame_rate: f64,
}

impl CameraModel {
    /// Builds a camera whose focal length is derived from the horizontal FOV
    /// (square pixels, principal point at the image center).
    pub fn from_fov(
        id: impl Into<String>,
        width: u32,
        height: u32,
        horizontal_fov: f64,
        extrinsic: RigidTransform,
        frame_rate: f64,
    ) -> Result<Self> {
        let f = width as f64 / (2.0 * (horizontal_fov / 2.0).tan());
        let cam = CameraModel {
            id: id.into(),
            intrinsics: Intrinsics {
                fx: f,
                fy: f,
                cx: width as f64 / 2.0,
                cy: height as f64 / 2.0,
            },
            width,
            height,
            extrinsic,
            horizontal_fov,
            frame_rate,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        let k = &self.intrinsics;
        let bad = |msg: String| Err(Error::InvalidGeometry(format!("camera `{}`: {msg}", self.id)));
        if !(k.fx > 0.0 && k.fy > 0.0) {
            return bad(format!("focal lengths must be positive ({}, {})", k.fx, k.fy));
        }
        if self.width == 0 || self.height == 0 {
            return bad("image size must be non-zero".into());
        }
        if !(k.cx >= 0.0 && k.cx <= self.width as f64 && k.cy >= 0.0 && k.cy <= self.height as f64) {
            return bad(format!("principal point ({}, {}) outside image", k.cx, k.cy));
        }
        if !(self.frame_rate > 0.0) {
            return bad(format!("frame rate must be positive, got {}", self.frame_rate));
        }
        let implied = 2.0 * (self.width as f64 / (2.0 * k.fx)).atan();
        if (implied - self.horizontal_fov).abs() > 0.01 * self.horizontal_fov {
            return bad(format!(
                "horizontal fov {} rad inconsistent with intrinsics ({implied} rad)",
                self.horizontal_fov
            ));
        }
        Ok(())
    }

    pub fn frame_period(&self) -> f64 {
        1.0 / self.frame_rate
    }

    /// Direction of the optical axis in the LiDAR frame.
    pub fn optical_axis_in_lidar(&self) -> Vector3<f64> {
        self.extrinsic.inverse().transform_vector(&Vector3::z())
    }

    fn in_bounds(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && u <= self.width as f64 && v >= 0.0 && v <= self.height as f64
    }

    /// Pinhole projection without bounds checking; `None` only at/behind the
    /// near plane.
    fn project_unbounded(&self, p: &Vector3<f64>) -> Option<(f64, f64)> {
        if p.z <= NEAR_PLANE {
            return None;
        }
        let k = &self.intrinsics;
        Some((k.fx * p.x / p.z + k.cx, k.fy * p.y / p.z + k.cy))
    }

    /// Unit-depth ray through pixel `(u, v)` in the camera frame.
    pub fn back_project(&self, u: f64, v: f64) -> Vector3<f64> {
        let k = &self.intrinsics;
        Vector3::new((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0)
    }
}

/// Projects a camera-frame point. Empty when the point is at or behind the
/// near plane, or lands outside the image.
pub fn project_point(cam: &CameraModel, p: &Vector3<f64>) -> Option<(f64, f64)> {
    cam.project_unbounded(p).filter(|&(u, v)| cam.in_bounds(u, v))
}

/// Axis-aligned hull of the projected corners of `bbox`, clamped to the
/// image. `box_to_camera` maps the box's frame into the camera frame.
/// Corners at or behind the near plane are skipped; fewer than two usable
/// corners (or a hull entirely off-image) gives `None`.
pub fn project_box3d(cam: &CameraModel, bbox: &Box3D, box_to_camera: &RigidTransform) -> Option<Box2D> {
    let mut count = 0;
    let (mut min_x, mut min_y) = (f64::INFINITY, f64::INFINITY);
    let (mut max_x, mut max_y) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for corner in bbox.corners() {
        let pc = box_to_camera.transform_point(&corner);
        if let Some((u, v)) = cam.project_unbounded(&pc) {
            count += 1;
            min_x = min_x.min(u);
            min_y = min_y.min(v);
            max_x = max_x.max(u);
            max_y = max_y.max(v);
        }
    }
    if count < 2 {
        return None;
    }
    let (w, h) = (cam.width as f64, cam.height as f64);
    Box2D::new(min_x.max(0.0), min_y.max(0.0), max_x.min(w), max_y.min(h)).ok()
}
