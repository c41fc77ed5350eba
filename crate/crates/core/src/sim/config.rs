use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraModel, RigidTransform};

const MAX_SPEED: f64 = 40.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub seed: u64,
    /// seconds
    pub duration: f64,
    pub lidar_rate: f64,
    pub camera_rate: f64,
    pub ins_rate: f64,
    pub lidar: LidarConfig,
    pub rig: RigConfig,
    pub vehicles: Vec<EgoMotion>,
    pub objects: ObjectConfig,
    pub buildings: BuildingConfig,
    pub noise: NoiseConfig,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            seed: 0,
            duration: 1.0,
            lidar_rate: 10.0,
            camera_rate: 30.0,
            ins_rate: 125.0,
            lidar: LidarConfig::default(),
            rig: RigConfig::default(),
            vehicles: vec![
                EgoMotion::ConstantVelocity {
                    x: 0.0,
                    y: 0.0,
                    heading_deg: 0.0,
                    speed: 10.0,
                },
                EgoMotion::ConstantVelocity {
                    x: -12.0,
                    y: 3.5,
                    heading_deg: 0.0,
                    speed: 10.0,
                },
            ],
            objects: ObjectConfig::default(),
            buildings: BuildingConfig::default(),
            noise: NoiseConfig::default(),
        }
    }
}

impl SceneConfig {
    pub fn lidar_period(&self) -> f64 {
        1.0 / self.lidar_rate
    }

    pub fn scan_count(&self) -> usize {
        (self.duration * self.lidar_rate).round() as usize
    }

    pub fn frame_count(&self) -> usize {
        (self.duration * self.camera_rate).round() as usize + 1
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        for (name, v) in [
            ("lidar_rate", self.lidar_rate),
            ("camera_rate", self.camera_rate),
            ("ins_rate", self.ins_rate),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.duration >= 2.0 / self.lidar_rate) || !self.duration.is_finite() {
            return bad(format!(
                "duration {} must cover at least two LiDAR periods",
                self.duration
            ));
        }
        if self.vehicles.is_empty() {
            return bad("at least one vehicle is required".into());
        }
        for (i, v) in self.vehicles.iter().enumerate() {
            let speed = v.speed();
            if !(0.0..=MAX_SPEED).contains(&speed) {
                return bad(format!("vehicle {i} speed {speed} outside [0, {MAX_SPEED}] m/s"));
            }
        }
        self.lidar.validate()?;
        self.rig.validate()?;
        self.objects.validate()?;
        self.buildings.validate()?;
        self.noise.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LidarConfig {
    pub rings: usize,
    pub min_elevation_deg: f64,
    pub max_elevation_deg: f64,
    /// Firings per revolution; every ring fires at each step.
    pub azimuth_steps: usize,
    pub min_range: f64,
    pub max_range: f64,
}

impl Default for LidarConfig {
    fn default() -> Self {
        LidarConfig {
            rings: 16,
            min_elevation_deg: -15.0,
            max_elevation_deg: 15.0,
            azimuth_steps: 1800,
            min_range: 1.0,
            max_range: 120.0,
        }
    }
}

impl LidarConfig {
    fn validate(&self) -> Result<()> {
        if self.rings == 0 || self.azimuth_steps == 0 {
            return Err(Error::InvalidConfig(
                "lidar rings and azimuth_steps must be non-zero".into(),
            ));
        }
        if !(self.min_elevation_deg <= self.max_elevation_deg)
            || self.min_elevation_deg < -90.0
            || self.max_elevation_deg > 90.0
        {
            return Err(Error::InvalidConfig("invalid lidar elevation range".into()));
        }
        if !(self.min_range >= 0.0 && self.max_range > self.min_range) {
            return Err(Error::InvalidConfig("invalid lidar range limits".into()));
        }
        Ok(())
    }

    pub fn elevations(&self) -> Vec<f64> {
        if self.rings == 1 {
            return vec![self.min_elevation_deg.to_radians()];
        }
        let span = self.max_elevation_deg - self.min_elevation_deg;
        (0..self.rings)
            .map(|r| (self.min_elevation_deg + span * r as f64 / (self.rings - 1) as f64).to_radians())
            .collect()
    }
}

/// Sensor placement shared by every vehicle. Mounts are in the INS body frame
/// (x forward, y left, z up; yaw counter-clockwise).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RigConfig {
    pub lidar_position: [f64; 3],
    pub lidar_yaw_deg: f64,
    pub cameras: Vec<CameraMount>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraMount {
    pub id: String,
    pub position: [f64; 3],
    pub yaw_deg: f64,
    pub horizontal_fov_deg: f64,
    pub width: u32,
    pub height: u32,
}

impl Default for RigConfig {
    fn default() -> Self {
        paper_rig()
    }
}

/// The seven-camera layout: a wide and a telephoto front camera, one rear
/// camera and four side cameras, with the LiDAR yawed 46° to the left.
pub fn paper_rig() -> RigConfig {
    let mount = |id: &str, position: [f64; 3], yaw_deg: f64, fov: f64, width: u32, height: u32| CameraMount {
        id: id.into(),
        position,
        yaw_deg,
        horizontal_fov_deg: fov,
        width,
        height,
    };
    RigConfig {
        lidar_position: [0.0, 0.0, 1.9],
        lidar_yaw_deg: 46.0,
        cameras: vec![
            mount("front_wide", [2.0, 0.0, 1.5], 0.0, 90.0, 3840, 2160),
            mount("front_tele", [2.0, 0.1, 1.5], 0.0, 30.0, 3840, 2160),
            mount("front_right", [1.5, -0.9, 1.5], -82.0, 70.0, 1920, 1536),
            mount("rear_right", [-1.5, -0.9, 1.5], -150.0, 70.0, 1920, 1536),
            mount("rear", [-2.0, 0.0, 1.5], 180.0, 70.0, 3840, 2160),
            mount("rear_left", [-1.5, 0.9, 1.5], 150.0, 70.0, 1920, 1536),
            mount("front_left", [1.5, 0.9, 1.5], 82.0, 70.0, 1920, 1536),
        ],
    }
}

impl RigConfig {
    fn validate(&self) -> Result<()> {
        let mut ids: Vec<&str> = self.cameras.iter().map(|c| c.id.as_str()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidConfig("camera ids must be unique".into()));
        }
        for c in &self.cameras {
            if !(c.horizontal_fov_deg > 0.0 && c.horizontal_fov_deg < 180.0) {
                return Err(Error::InvalidConfig(format!(
                    "camera `{}` fov must be in (0, 180) degrees",
                    c.id
                )));
            }
        }
        Ok(())
    }

    /// `ins ← lidar`.
    pub fn lidar_extrinsic(&self, lidar_frame: &str, ins_frame: &str) -> RigidTransform {
        RigidTransform::from_yaw(
            self.lidar_yaw_deg.to_radians(),
            Vector3::from(self.lidar_position),
            lidar_frame,
            ins_frame,
        )
    }

    /// Camera models with `camera ← lidar` extrinsics.
    pub fn camera_models(
        &self,
        lidar_extrinsic: &RigidTransform,
        camera_rate: f64,
        frame_suffix: &str,
    ) -> Result<Vec<CameraModel>> {
        let ins_frame = lidar_extrinsic.target_frame().clone();
        self.cameras
            .iter()
            .map(|m| {
                let psi = m.yaw_deg.to_radians();
                let (s, c) = psi.sin_cos();
                // columns: camera x (right), y (down), z (forward) in the body frame
                let rot = Matrix3::new(s, 0.0, c, -c, 0.0, s, 0.0, -1.0, 0.0);
                let ins_from_cam = RigidTransform::new(
                    UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(rot)),
                    Vector3::from(m.position),
                    format!("{}{frame_suffix}", m.id),
                    ins_frame.clone(),
                );
                let extrinsic = ins_from_cam.inverse().compose(lidar_extrinsic)?;
                CameraModel::from_fov(
                    m.id.clone(),
                    m.width,
                    m.height,
                    m.horizontal_fov_deg.to_radians(),
                    extrinsic,
                    camera_rate,
                )
            })
            .collect()
    }
}

/// Planar ego motion of a vehicle's INS origin (on the ground).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum EgoMotion {
    ConstantVelocity {
        x: f64,
        y: f64,
        heading_deg: f64,
        speed: f64,
    },
    ConstantTurnRate {
        x: f64,
        y: f64,
        heading_deg: f64,
        speed: f64,
        yaw_rate_deg: f64,
    },
}

impl EgoMotion {
    pub fn speed(&self) -> f64 {
        match *self {
            EgoMotion::ConstantVelocity { speed, .. } | EgoMotion::ConstantTurnRate { speed, .. } => speed,
        }
    }

    fn parts(&self) -> (Vector2<f64>, f64, f64, f64) {
        match *self {
            EgoMotion::ConstantVelocity {
                x,
                y,
                heading_deg,
                speed,
            } => (Vector2::new(x, y), heading_deg.to_radians(), speed, 0.0),
            EgoMotion::ConstantTurnRate {
                x,
                y,
                heading_deg,
                speed,
                yaw_rate_deg,
            } => (
                Vector2::new(x, y),
                heading_deg.to_radians(),
                speed,
                yaw_rate_deg.to_radians(),
            ),
        }
    }

    /// Position and heading at time `t`.
    pub fn state_at(&self, t: f64) -> (Vector2<f64>, f64) {
        let (p0, h0, v, w) = self.parts();
        let h = h0 + w * t;
        let p = if w.abs() < 1e-12 {
            p0 + v * t * Vector2::new(h0.cos(), h0.sin())
        } else {
            p0 + (v / w) * Vector2::new(h.sin() - h0.sin(), h0.cos() - h.cos())
        };
        (p, h)
    }

    pub fn velocity_at(&self, t: f64) -> Vector2<f64> {
        let (_, _, v, _) = self.parts();
        let (_, h) = self.state_at(t);
        v * Vector2::new(h.cos(), h.sin())
    }
}

/// Dynamic vehicle-sized objects. Velocities are vehicle 0's initial
/// velocity plus a relative velocity of random direction whose magnitude is
/// drawn from `relative_speed`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObjectConfig {
    pub count: usize,
    pub relative_speed: [f64; 2],
    pub length: [f64; 2],
    pub width: [f64; 2],
    pub height: [f64; 2],
    /// Range from vehicle 0 at mid-clip.
    pub distance: [f64; 2],
    /// Closest allowed approach to any vehicle during the clip.
    pub clearance: f64,
}

impl Default for ObjectConfig {
    fn default() -> Self {
        ObjectConfig {
            count: 8,
            relative_speed: [5.0, 20.0],
            length: [3.8, 5.2],
            width: [1.7, 2.1],
            height: [1.4, 2.2],
            distance: [8.0, 35.0],
            clearance: 4.0,
        }
    }
}

fn check_range(name: &str, r: [f64; 2], min: f64) -> Result<()> {
    if !(r[0] >= min && r[1] >= r[0] && r[1].is_finite()) {
        return Err(Error::InvalidConfig(format!("{name} range {r:?} is invalid")));
    }
    Ok(())
}

impl ObjectConfig {
    fn validate(&self) -> Result<()> {
        check_range("relative_speed", self.relative_speed, 0.0)?;
        if self.relative_speed[1] > MAX_SPEED {
            return Err(Error::InvalidConfig(format!("relative_speed above {MAX_SPEED} m/s")));
        }
        check_range("length", self.length, 1e-3)?;
        check_range("width", self.width, 1e-3)?;
        check_range("height", self.height, 1e-3)?;
        check_range("distance", self.distance, 0.0)?;
        if !(self.clearance >= 0.0) {
            return Err(Error::InvalidConfig("clearance must be non-negative".into()));
        }
        Ok(())
    }
}

/// Static cuboids lining both sides of vehicle 0's path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BuildingConfig {
    pub count: usize,
    pub lateral_offset: [f64; 2],
    pub along_track: [f64; 2],
    pub footprint: [f64; 2],
    pub height: [f64; 2],
}

impl Default for BuildingConfig {
    fn default() -> Self {
        BuildingConfig {
            count: 12,
            lateral_offset: [14.0, 30.0],
            along_track: [-60.0, 80.0],
            footprint: [4.0, 14.0],
            height: [4.0, 15.0],
        }
    }
}

impl BuildingConfig {
    fn validate(&self) -> Result<()> {
        check_range("lateral_offset", self.lateral_offset, 0.0)?;
        if !(self.along_track[1] >= self.along_track[0]) {
            return Err(Error::InvalidConfig("along_track range is invalid".into()));
        }
        check_range("footprint", self.footprint, 1e-3)?;
        check_range("building height", self.height, 1e-3)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Gaussian range noise, meters.
    pub range_sigma: f64,
    /// Per-sensor-clock Gaussian offset applied to reported timestamps, seconds.
    pub timestamp_jitter: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            range_sigma: 0.01,
            timestamp_jitter: 0.0,
        }
    }
}

impl NoiseConfig {
    pub fn none() -> Self {
        NoiseConfig {
            range_sigma: 0.0,
            timestamp_jitter: 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.range_sigma >= 0.0 && self.timestamp_jitter >= 0.0) {
            return Err(Error::InvalidConfig("noise sigmas must be non-negative".into()));
        }
        Ok(())
    }
}
