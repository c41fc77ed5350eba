//! Synthetic two-vehicle recordings with exact ground truth.
//!
//! Each vehicle carries an INS (pose source), a spinning LiDAR and a camera
//! rig. Scans are ray cast against a ground plane, static buildings and
//! constant-velocity objects, each beam at its own acquisition instant, so
//! moving objects are smeared exactly as a real sweep would smear them.
//! Cameras are frame slots with ground-truth 2D boxes; nothing is rendered.

mod config;
mod world;

use std::f64::consts::TAU;

use nalgebra::{Isometry3, Point3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{
    paper_rig, BuildingConfig, CameraMount, EgoMotion, LidarConfig, NoiseConfig, ObjectConfig, RigConfig, SceneConfig,
};
pub use world::{generate_world, ObjectTrack, World, WORLD_FRAME};

use crate::alignment::CameraFrameSchedule;
use crate::error::{Error, Result};
use crate::geometry::{project_box3d, Box2D, CameraModel, PoseSample, PoseTrajectory, RigidTransform};
use crate::scan::{point_timestamp, LidarPoint, LidarScan};

/// Trajectories extend this far beyond the clip so clock offsets and
/// frame-time lookups never leave the sampled interval.
const TRAJECTORY_MARGIN: f64 = 0.2;

pub fn lidar_frame(vehicle: usize) -> String {
    format!("lidar_{vehicle}")
}

pub fn ins_frame(vehicle: usize) -> String {
    format!("ins_{vehicle}")
}

/// What one vehicle reports: poses, calibration, scans and frame schedules.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehicleRecording {
    /// `world ← ins`, sampled at the INS rate.
    pub trajectory: PoseTrajectory,
    /// `ins ← lidar`
    pub lidar_extrinsic: RigidTransform,
    pub cameras: Vec<CameraModel>,
    pub scans: Vec<LidarScan>,
    pub schedules: Vec<CameraFrameSchedule>,
}

impl VehicleRecording {
    pub fn camera(&self, id: &str) -> Option<&CameraModel> {
        self.cameras.iter().find(|c| c.id == id)
    }

    pub fn schedule(&self, camera_id: &str) -> Option<&CameraFrameSchedule> {
        self.schedules.iter().find(|s| s.camera_id == camera_id)
    }

    /// `world ← lidar` at a (reported) time.
    pub fn lidar_pose(&self, t: f64) -> Result<Isometry3<f64>> {
        Ok(self.trajectory.interpolate_isometry(t)? * self.lidar_extrinsic.isometry())
    }
}

/// Clock offsets of one vehicle's sensors: reported = true + offset.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VehicleTruth {
    pub lidar_clock_offset: f64,
    /// Same order as the vehicle's cameras.
    pub camera_clock_offsets: Vec<f64>,
}

/// Ground-truth image box of an object in one camera frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GtBox2D {
    pub vehicle: usize,
    pub camera_id: String,
    pub frame_index: usize,
    pub object_id: u64,
    pub bbox: Box2D,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub world: World,
    pub vehicles: Vec<VehicleTruth>,
    /// Sorted by (vehicle, camera order, frame, object).
    pub boxes_2d: Vec<GtBox2D>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneRecording {
    pub config: SceneConfig,
    pub vehicles: Vec<VehicleRecording>,
    pub truth: GroundTruth,
}

impl SceneRecording {
    pub fn true_scan_start(&self, scan_index: usize) -> f64 {
        scan_index as f64 / self.config.lidar_rate
    }

    pub fn true_frame_time(&self, frame_index: usize) -> f64 {
        frame_index as f64 / self.config.camera_rate
    }

    /// True acquisition time of a point of scan `scan_index`.
    pub fn true_point_time(&self, scan_index: usize, point: &LidarPoint) -> Result<f64> {
        point_timestamp(
            self.true_scan_start(scan_index),
            point.azimuth,
            self.config.lidar_period(),
        )
    }
}

fn ego_trajectory(motion: &EgoMotion, config: &SceneConfig, frame: &str) -> Result<PoseTrajectory> {
    let rate = config.ins_rate;
    let first = (-TRAJECTORY_MARGIN * rate).floor() as i64;
    let last = ((config.duration + TRAJECTORY_MARGIN) * rate).ceil() as i64;
    let samples = (first..=last)
        .map(|k| {
            let t = k as f64 / rate;
            let (p, heading) = motion.state_at(t);
            PoseSample {
                time: t,
                pose: RigidTransform::from_yaw(heading, Vector3::new(p.x, p.y, 0.0), frame, WORLD_FRAME),
            }
        })
        .collect();
    PoseTrajectory::new(samples)
}

fn intensity_of(hit_object: Option<u64>, world_point: &Vector3<f64>) -> f64 {
    match hit_object {
        Some(_) => 0.8,
        None if world_point.z.abs() < 1e-6 => 0.2,
        None => 0.5,
    }
}

fn ray_cast_scan(
    config: &SceneConfig,
    world: &World,
    vehicle: &VehicleRecording,
    vehicle_index: usize,
    scan_index: usize,
) -> Result<LidarScan> {
    let period = config.lidar_period();
    let start = scan_index as f64 * period;
    let lidar = &config.lidar;
    let elevations = lidar.elevations();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(((vehicle_index as u64) << 32) | scan_index as u64);
    let noise =
        Normal::new(0.0, config.noise.range_sigma).map_err(|e| Error::InvalidConfig(format!("range noise: {e}")))?;

    let mut points = Vec::new();
    for step in 0..lidar.azimuth_steps {
        let azimuth = TAU * step as f64 / lidar.azimuth_steps as f64;
        let t = point_timestamp(start, azimuth, period)?;
        let pose = vehicle.lidar_pose(t)?;
        let origin = pose.translation.vector;
        let (sa, ca) = azimuth.sin_cos();
        for &e in &elevations {
            let (se, ce) = e.sin_cos();
            let dir = Vector3::new(ce * ca, -ce * sa, se);
            let world_dir = pose.rotation * dir;
            let Some((range, hit)) = world.cast(&origin, &world_dir, t, lidar.max_range) else {
                continue;
            };
            if range < lidar.min_range {
                continue;
            }
            let measured = range + noise.sample(&mut rng);
            points.push(LidarPoint {
                position: dir * measured,
                intensity: intensity_of(hit, &(origin + world_dir * range)),
                azimuth,
                timestamp: t,
                object_id: hit,
            });
        }
    }
    Ok(LidarScan {
        scan_start: start,
        period,
        sensor_frame: lidar_frame(vehicle_index).into(),
        compensated_to: None,
        points,
    })
}

/// Ground-truth box of `object` in `cam` at true time `t`, if it projects.
pub fn ground_truth_box(
    vehicle: &VehicleRecording,
    cam: &CameraModel,
    object: &ObjectTrack,
    t: f64,
) -> Result<Option<Box2D>> {
    let lidar_from_world = RigidTransform::from_isometry(
        vehicle.lidar_pose(t)?.inverse(),
        WORLD_FRAME,
        vehicle.lidar_extrinsic.source_frame().clone(),
    );
    let in_lidar = object.box_at(t).transformed(&lidar_from_world)?;
    Ok(project_box3d(cam, &in_lidar, &cam.extrinsic))
}

/// Deterministic in `config` (including its seed).
pub fn simulate_scene(config: &SceneConfig) -> Result<SceneRecording> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let world = generate_world(config, &mut rng);

    let mut vehicles = Vec::with_capacity(config.vehicles.len());
    for (i, motion) in config.vehicles.iter().enumerate() {
        let trajectory = ego_trajectory(motion, config, &ins_frame(i))?;
        let lidar_extrinsic = config.rig.lidar_extrinsic(&lidar_frame(i), &ins_frame(i));
        let cameras = config
            .rig
            .camera_models(&lidar_extrinsic, config.camera_rate, &format!("_{i}"))?;
        let frames: Vec<f64> = (0..config.frame_count())
            .map(|k| k as f64 / config.camera_rate)
            .collect();
        let schedules = cameras
            .iter()
            .map(|c| CameraFrameSchedule::new(c.id.clone(), frames.clone()))
            .collect::<Result<_>>()?;
        vehicles.push(VehicleRecording {
            trajectory,
            lidar_extrinsic,
            cameras,
            scans: Vec::new(),
            schedules,
        });
    }

    let jobs: Vec<(usize, usize)> = (0..vehicles.len())
        .flat_map(|v| (0..config.scan_count()).map(move |k| (v, k)))
        .collect();
    let scans: Vec<LidarScan> = jobs
        .par_iter()
        .map(|&(v, k)| ray_cast_scan(config, &world, &vehicles[v], v, k))
        .collect::<Result<_>>()?;
    for ((v, _), scan) in jobs.into_iter().zip(scans) {
        vehicles[v].scans.push(scan);
    }

    let mut boxes_2d = Vec::new();
    for (v, vehicle) in vehicles.iter().enumerate() {
        for cam in &vehicle.cameras {
            for k in 0..config.frame_count() {
                let t = k as f64 / config.camera_rate;
                for object in &world.objects {
                    if let Some(bbox) = ground_truth_box(vehicle, cam, object, t)? {
                        boxes_2d.push(GtBox2D {
                            vehicle: v,
                            camera_id: cam.id.clone(),
                            frame_index: k,
                            object_id: object.object_id,
                            bbox,
                        });
                    }
                }
            }
        }
    }

    let truth = GroundTruth {
        vehicles: vehicles
            .iter()
            .map(|v| VehicleTruth {
                lidar_clock_offset: 0.0,
                camera_clock_offsets: vec![0.0; v.cameras.len()],
            })
            .collect(),
        world,
        boxes_2d,
    };
    let rec = SceneRecording {
        config: config.clone(),
        vehicles,
        truth,
    };
    if config.noise.timestamp_jitter > 0.0 {
        apply_sync_jitter(&rec, config.noise.timestamp_jitter, config.seed ^ 0x5eed_c10c)
    } else {
        Ok(rec)
    }
}

/// Shifts the reported timestamps of one vehicle's sensors by fixed clock
/// offsets (seconds). Ground truth records the accumulated offsets.
pub fn apply_clock_offsets(
    rec: &SceneRecording,
    vehicle: usize,
    lidar_offset: f64,
    camera_offsets: &[f64],
) -> Result<SceneRecording> {
    let mut out = rec.clone();
    let veh = out
        .vehicles
        .get_mut(vehicle)
        .ok_or_else(|| Error::InvalidConfig(format!("no vehicle {vehicle}")))?;
    if camera_offsets.len() != veh.cameras.len() {
        return Err(Error::InvalidConfig(format!(
            "{} camera offsets for {} cameras",
            camera_offsets.len(),
            veh.cameras.len()
        )));
    }
    for scan in &mut veh.scans {
        scan.scan_start += lidar_offset;
        for p in &mut scan.points {
            p.timestamp += lidar_offset;
        }
    }
    for (schedule, off) in veh.schedules.iter_mut().zip(camera_offsets) {
        for t in &mut schedule.frame_timestamps {
            *t += off;
        }
    }
    let truth = &mut out.truth.vehicles[vehicle];
    truth.lidar_clock_offset += lidar_offset;
    for (acc, off) in truth.camera_clock_offsets.iter_mut().zip(camera_offsets) {
        *acc += off;
    }
    Ok(out)
}

/// Gaussian clock offsets, constant per sensor clock (each LiDAR and each
/// camera), applied to reported timestamps only. The INS is the time
/// reference.
pub fn apply_sync_jitter(rec: &SceneRecording, sigma: f64, seed: u64) -> Result<SceneRecording> {
    if !(sigma >= 0.0) {
        return Err(Error::Domain(format!("jitter sigma {sigma} must be non-negative")));
    }
    if sigma == 0.0 {
        return Ok(rec.clone());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::Domain(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = rec.clone();
    for v in 0..rec.vehicles.len() {
        let lidar = normal.sample(&mut rng);
        let cams: Vec<f64> = (0..rec.vehicles[v].cameras.len())
            .map(|_| normal.sample(&mut rng))
            .collect();
        out = apply_clock_offsets(&out, v, lidar, &cams)?;
    }
    Ok(out)
}

/// Mean world-space error of a vehicle's object points when placed with
/// their reported timestamps: `|T_WL(t') p − x(t')|`, where `x(t')` is where
/// the sampled surface point really was at the reported instant. `None` when
/// no point hit an object.
pub fn sync_misalignment(rec: &SceneRecording, vehicle: usize) -> Result<Option<f64>> {
    let veh = &rec.vehicles[vehicle];
    let mut sum = 0.0;
    let mut n = 0usize;
    for (k, scan) in veh.scans.iter().enumerate() {
        for p in scan.points.iter() {
            let Some(id) = p.object_id else { continue };
            let object = rec
                .truth
                .world
                .object(id)
                .ok_or_else(|| Error::SceneMismatch(format!("unknown object {id}")))?;
            let t_true = rec.true_point_time(k, p)?;
            let t_rep = p.timestamp;
            let local = Point3::from(p.position);
            let believed = veh.lidar_pose(t_rep)?.transform_point(&local).coords;
            let actual = veh.lidar_pose(t_true)?.transform_point(&local).coords + object.velocity * (t_rep - t_true);
            sum += (believed - actual).norm();
            n += 1;
        }
    }
    Ok((n > 0).then(|| sum / n as f64))
}
