//! Rigid transforms, pose interpolation, boxes and pinhole projection.
//!
//! Units are meters, radians and seconds throughout. Timestamps are `f64`
//! seconds since the start of a recording.

mod boxes;
mod camera;
mod trajectory;
mod transform;

pub use boxes::{Box2D, Box3D, ObjectClass};
pub use camera::{project_box3d, project_point, CameraModel, Intrinsics, NEAR_PLANE};
pub use trajectory::{interpolate_isometries, slerp_shortest, PoseSample, PoseTrajectory};
pub use transform::{chain, FrameId, RigidTransform};

/// `a ∘ b`; see [`RigidTransform::compose`].
pub fn compose(a: &RigidTransform, b: &RigidTransform) -> crate::Result<RigidTransform> {
    a.compose(b)
}

pub fn invert(t: &RigidTransform) -> RigidTransform {
    t.inverse()
}

pub fn interpolate_pose(traj: &PoseTrajectory, t: f64) -> crate::Result<RigidTransform> {
    traj.interpolate(t)
}
