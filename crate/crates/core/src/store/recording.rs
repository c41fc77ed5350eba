use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::calibration::{Calibration, VehicleCalibration};
use super::{read_json, to_json_bytes, write_atomic};
use crate::alignment::CameraFrameSchedule;
use crate::error::{Error, Result};
use crate::geometry::PoseTrajectory;
use crate::scan::io::{decode_binary, encode_binary, read_csv, write_csv};
use crate::sim::{GroundTruth, SceneConfig, SceneRecording, VehicleRecording};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScanFormat {
    /// Columnar little-endian, lossless.
    #[default]
    Binary,
    /// Human-readable, 9 significant digits.
    Csv,
}

impl ScanFormat {
    fn extension(self) -> &'static str {
        match self {
            ScanFormat::Binary => "rscn",
            ScanFormat::Csv => "csv",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestVehicle {
    pub name: String,
    pub poses: String,
    pub schedules: String,
    pub scans: Vec<String>,
}

/// Index of a recording directory. Paths are relative to the directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format_version: u32,
    /// SHA-256 (hex) over every other file, in manifest order.
    pub recording_id: String,
    pub seed: u64,
    pub duration: f64,
    pub lidar_rate: f64,
    pub camera_rate: f64,
    pub ins_rate: f64,
    pub scan_format: ScanFormat,
    pub total_scans: usize,
    pub config: String,
    pub calibration: String,
    pub ground_truth: String,
    pub vehicles: Vec<ManifestVehicle>,
}

fn scan_bytes(scan: &crate::scan::LidarScan, format: ScanFormat) -> Result<Vec<u8>> {
    match format {
        ScanFormat::Binary => Ok(encode_binary(scan)),
        ScanFormat::Csv => {
            let mut buf = Vec::new();
            write_csv(scan, &mut buf)?;
            Ok(buf)
        }
    }
}

/// `(relative path, bytes)` pairs of a rendered recording.
type Files = Vec<(String, Vec<u8>)>;

/// Serializes a recording into its files plus the manifest describing them.
fn render(rec: &SceneRecording, format: ScanFormat) -> Result<(Manifest, Files)> {
    let mut files: Files = Vec::new();
    files.push(("config.json".into(), to_json_bytes(&rec.config)?));
    let calibration = Calibration {
        vehicles: rec
            .vehicles
            .iter()
            .enumerate()
            .map(|(i, v)| VehicleCalibration {
                vehicle: i,
                lidar_extrinsic: v.lidar_extrinsic.clone(),
                cameras: v.cameras.clone(),
            })
            .collect(),
    };
    files.push(("calibration.json".into(), to_json_bytes(&calibration)?));
    files.push(("ground_truth.json".into(), to_json_bytes(&rec.truth)?));

    let mut vehicles = Vec::new();
    for (i, v) in rec.vehicles.iter().enumerate() {
        let name = format!("vehicle_{i}");
        let poses = format!("{name}/poses.json");
        let schedules = format!("{name}/schedules.json");
        files.push((poses.clone(), to_json_bytes(&v.trajectory)?));
        files.push((schedules.clone(), to_json_bytes(&v.schedules)?));
        let mut scans = Vec::new();
        for (k, scan) in v.scans.iter().enumerate() {
            let path = format!("{name}/scans/{k:06}.{}", format.extension());
            files.push((path.clone(), scan_bytes(scan, format)?));
            scans.push(path);
        }
        vehicles.push(ManifestVehicle {
            name,
            poses,
            schedules,
            scans,
        });
    }

    let mut hasher = Sha256::new();
    for (path, bytes) in &files {
        hasher.update(path.as_bytes());
        hasher.update((bytes.len() as u64).to_le_bytes());
        hasher.update(bytes);
    }
    let recording_id: String = hasher.finalize().iter().map(|b| format!("{b:02x}")).collect();

    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        recording_id,
        seed: rec.config.seed,
        duration: rec.config.duration,
        lidar_rate: rec.config.lidar_rate,
        camera_rate: rec.config.camera_rate,
        ins_rate: rec.config.ins_rate,
        scan_format: format,
        total_scans: rec.vehicles.iter().map(|v| v.scans.len()).sum(),
        config: "config.json".into(),
        calibration: "calibration.json".into(),
        ground_truth: "ground_truth.json".into(),
        vehicles,
    };
    Ok((manifest, files))
}

/// Identifier a recording would get when written in `format`.
pub fn recording_id(rec: &SceneRecording, format: ScanFormat) -> Result<String> {
    Ok(render(rec, format)?.0.recording_id)
}

/// Writes a recording directory. Everything goes to a sibling staging
/// directory first, which replaces `dir` only once complete. An existing
/// `dir` is only replaced if it is empty or holds a previous recording.
pub fn write_recording(dir: &Path, rec: &SceneRecording, format: ScanFormat) -> Result<Manifest> {
    let (manifest, files) = render(rec, format)?;
    if dir.exists() && !dir.join(MANIFEST_FILE).exists() {
        let empty = std::fs::read_dir(dir)
            .map_err(|e| Error::io(format!("inspecting {}", dir.display()), e))?
            .next()
            .is_none();
        if !empty {
            return Err(Error::InvalidConfig(format!(
                "{} exists and is not a recording; refusing to replace it",
                dir.display()
            )));
        }
    }
    let name = dir
        .file_name()
        .ok_or_else(|| Error::InvalidConfig(format!("not a directory path: {}", dir.display())))?;
    let parent = match dir.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&parent).map_err(|e| Error::io(format!("creating {}", parent.display()), e))?;
    let staging = parent.join(format!(".{}.partial", name.to_string_lossy()));
    if staging.exists() {
        std::fs::remove_dir_all(&staging).map_err(|e| Error::io(format!("clearing {}", staging.display()), e))?;
    }
    let result = (|| {
        for (rel, bytes) in &files {
            let path = staging.join(rel);
            if let Some(p) = path.parent() {
                std::fs::create_dir_all(p).map_err(|e| Error::io(format!("creating {}", p.display()), e))?;
            }
            write_atomic(&path, bytes)?;
        }
        write_atomic(&staging.join(MANIFEST_FILE), &to_json_bytes(&manifest)?)?;
        if dir.exists() {
            std::fs::remove_dir_all(dir).map_err(|e| Error::io(format!("replacing {}", dir.display()), e))?;
        }
        std::fs::rename(&staging, dir).map_err(|e| Error::io(format!("moving into {}", dir.display()), e))
    })();
    if result.is_err() {
        let _ = std::fs::remove_dir_all(&staging);
    }
    result.map(|()| manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let manifest: Manifest = read_json(&dir.join(MANIFEST_FILE))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::format(
            dir.join(MANIFEST_FILE),
            format!("unsupported format version {}", manifest.format_version),
        ));
    }
    Ok(manifest)
}

pub fn read_recording(dir: &Path) -> Result<(Manifest, SceneRecording)> {
    let manifest = read_manifest(dir)?;
    let config: SceneConfig = read_json(&dir.join(&manifest.config))?;
    let calibration: Calibration = read_json(&dir.join(&manifest.calibration))?;
    let truth: GroundTruth = read_json(&dir.join(&manifest.ground_truth))?;
    if calibration.vehicles.len() != manifest.vehicles.len() {
        return Err(Error::format(
            dir.join(&manifest.calibration),
            format!(
                "{} calibrated vehicles, manifest lists {}",
                calibration.vehicles.len(),
                manifest.vehicles.len()
            ),
        ));
    }
    let mut vehicles = Vec::with_capacity(manifest.vehicles.len());
    for (mv, cal) in manifest.vehicles.iter().zip(calibration.vehicles) {
        let trajectory: PoseTrajectory = read_json(&dir.join(&mv.poses))?;
        let schedules: Vec<CameraFrameSchedule> = read_json(&dir.join(&mv.schedules))?;
        let scans = mv
            .scans
            .iter()
            .map(|rel| {
                let path = dir.join(rel);
                let data = std::fs::read(&path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
                match manifest.scan_format {
                    ScanFormat::Binary => decode_binary(&data, &path),
                    ScanFormat::Csv => read_csv(data.as_slice(), &path),
                }
            })
            .collect::<Result<_>>()?;
        vehicles.push(VehicleRecording {
            trajectory,
            lidar_extrinsic: cal.lidar_extrinsic,
            cameras: cal.cameras,
            scans,
            schedules,
        });
    }
    Ok((
        manifest,
        SceneRecording {
            config,
            vehicles,
            truth,
        },
    ))
}
