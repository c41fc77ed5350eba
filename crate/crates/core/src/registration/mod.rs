//! Inter-vehicle LiDAR registration: a pose-chain initial guess refined by
//! generalized ICP.

mod gicp;

use serde::{Deserialize, Serialize};

pub use gicp::{gicp_refine, registration_residual, voxel_downsample};

use crate::error::{Error, Result};
use crate::geometry::RigidTransform;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegistrationParams {
    pub voxel_size: f64,
    pub max_correspondence_distance: f64,
    /// Pairing distance of the second, fine stage; equal to
    /// `max_correspondence_distance` for a single stage.
    pub fine_correspondence_distance: f64,
    pub max_iterations: usize,
    pub translation_epsilon: f64,
    pub rotation_epsilon: f64,
    pub neighbor_count_for_covariance: usize,
}

impl Default for RegistrationParams {
    fn default() -> Self {
        RegistrationParams {
            voxel_size: 0.5,
            max_correspondence_distance: 1.0,
            fine_correspondence_distance: 0.3,
            max_iterations: 50,
            translation_epsilon: 1e-4,
            rotation_epsilon: 1e-4,
            neighbor_count_for_covariance: 20,
        }
    }
}

impl RegistrationParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("voxel_size", self.voxel_size),
            ("max_correspondence_distance", self.max_correspondence_distance),
            ("fine_correspondence_distance", self.fine_correspondence_distance),
            ("translation_epsilon", self.translation_epsilon),
            ("rotation_epsilon", self.rotation_epsilon),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if self.fine_correspondence_distance > self.max_correspondence_distance {
            return Err(Error::InvalidConfig(
                "fine_correspondence_distance must not exceed max_correspondence_distance".into(),
            ));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig("max_iterations must be at least 1".into()));
        }
        if self.neighbor_count_for_covariance < 3 {
            return Err(Error::InvalidConfig(
                "neighbor_count_for_covariance must be at least 3".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegistrationResult {
    /// `target lidar ← source lidar`
    pub transform: RigidTransform,
    pub converged: bool,
    pub iterations: usize,
    /// Residual (meters, capped at the fine pairing distance) at the
    /// initial guess.
    pub initial_residual: f64,
    /// Residual of the returned pose; never above `initial_residual`.
    pub final_residual: f64,
    /// Residual of each accepted iterate, starting with the initial one;
    /// non-increasing.
    pub residual_history: Vec<f64>,
}

/// `T_L1L2 = (T_I1L1)⁻¹ · (T_WI1)⁻¹ · T_WI2 · T_I2L2`: vehicle-2 LiDAR
/// coordinates into vehicle-1 LiDAR coordinates.
pub fn chain_initial_transform(
    t_i1l1: &RigidTransform,
    t_wi1: &RigidTransform,
    t_wi2: &RigidTransform,
    t_i2l2: &RigidTransform,
) -> Result<RigidTransform> {
    t_i1l1
        .inverse()
        .compose(&t_wi1.inverse())?
        .compose(t_wi2)?
        .compose(t_i2l2)
}
