use serde::{Deserialize, Serialize};

use crate::geometry::{CameraModel, RigidTransform};

/// Sensor calibration of one vehicle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleCalibration {
    pub vehicle: usize,
    /// `ins ← lidar`
    pub lidar_extrinsic: RigidTransform,
    /// Intrinsics plus `camera ← lidar` extrinsics.
    pub cameras: Vec<CameraModel>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Calibration {
    pub vehicles: Vec<VehicleCalibration>,
}
