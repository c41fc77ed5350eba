use std::collections::BTreeMap;
use std::path::Path;

use rigalign::cli::{run, EvaluationReport, EXIT_DATA, EXIT_OK, EXIT_USAGE};
use rigalign::evaluation::StrategyRun;
use rigalign::store::read_json;

fn rigalign(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("rigalign").chain(args.iter().copied());
    let code = run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn write_config(dir: &Path, objects: usize) -> String {
    let path = dir.join("run.json");
    let cfg = serde_json::json!({
        "simulate": {
            "scene": {
                "seed": 3,
                "duration": 0.2,
                "lidar": { "rings": 8, "azimuth_steps": 720 },
                "objects": { "count": objects }
            }
        },
        "register": {
            "chain_noise": { "translation_m": 0.2, "rotation_deg": 1.0, "seed": 1 }
        }
    });
    std::fs::write(&path, serde_json::to_vec_pretty(&cfg).unwrap()).unwrap();
    path.to_str().unwrap().to_owned()
}

fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(
                    p.strip_prefix(dir).unwrap().display().to_string(),
                    std::fs::read(&p).unwrap(),
                );
            }
        }
    }
    out
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(rigalign(&["--help"]).0, EXIT_OK);
    assert_eq!(rigalign(&["frobnicate"]).0, EXIT_USAGE);
    let tmp = tempfile::tempdir().unwrap();
    let (code, _, err) = rigalign(&["align", tmp.path().to_str().unwrap(), "--strategy", "sideways"]);
    assert_eq!(code, EXIT_USAGE);
    assert!(err.contains("unknown strategy"));

    let bad = tmp.path().join("bad.json");
    std::fs::write(&bad, r#"{"simulate": {"scene": {"sede": 1}}}"#).unwrap();
    let (code, _, _) = rigalign(&["--config", bad.to_str().unwrap(), "simulate", "--out", "x"]);
    assert_eq!(code, EXIT_USAGE);
}

#[test]
fn missing_data_exits_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope");
    let (code, _, err) = rigalign(&["align", missing.to_str().unwrap(), "--strategy", "frame"]);
    assert_eq!(code, EXIT_DATA);
    assert!(!err.is_empty());
}

#[test]
fn simulate_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), 4);
    let dirs: Vec<String> = ["a", "b", "c"]
        .iter()
        .map(|n| tmp.path().join(n).to_str().unwrap().to_owned())
        .collect();
    for (dir, seed) in dirs.iter().zip(["7", "7", "8"]) {
        let (code, _, err) = rigalign(&["--config", &cfg, "simulate", "--seed", seed, "--out", dir]);
        assert_eq!(code, EXIT_OK, "{err}");
    }
    let (a, b, c) = (
        tree(Path::new(&dirs[0])),
        tree(Path::new(&dirs[1])),
        tree(Path::new(&dirs[2])),
    );
    assert_eq!(a, b);
    assert_ne!(a.get("manifest.json"), c.get("manifest.json"));
}

#[test]
fn pipeline_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let p = |n: &str| tmp.path().join(n).to_str().unwrap().to_owned();
    let cfg = write_config(tmp.path(), 6);
    let rec = p("rec");
    assert_eq!(rigalign(&["--config", &cfg, "simulate", "--out", &rec]).0, EXIT_OK);

    for s in ["stamp", "frame", "target"] {
        let (code, _, err) = rigalign(&["align", &rec, "--strategy", s, "--out", &p(&format!("{s}.json"))]);
        assert_eq!(code, EXIT_OK, "{err}");
    }
    let (code, stdout, err) = rigalign(&[
        "evaluate",
        &rec,
        &p("stamp.json"),
        &p("frame.json"),
        &p("target.json"),
        "--out",
        &p("eval"),
    ]);
    assert_eq!(code, EXIT_OK, "{err}");
    let lines: Vec<&str> = stdout.lines().collect();
    assert!(lines[0].starts_with("Method | average IoU"));
    assert!(lines[2].starts_with("Stamp "));
    assert!(lines[3].starts_with("Frame "));
    assert!(lines[4].starts_with("Target "));
    assert_eq!(std::fs::read_to_string(p("eval/metrics.txt")).unwrap(), stdout);

    let metrics = p("eval/metrics.json");
    let (code, text, _) = rigalign(&["report", &metrics]);
    assert_eq!((code, text.as_str()), (EXIT_OK, stdout.as_str()));
    let (code, latex, _) = rigalign(&["report", &metrics, "--format", "latex"]);
    assert_eq!(code, EXIT_OK);
    assert!(latex.starts_with("Method base & average IoU"));
    let (code, json, _) = rigalign(&["report", &metrics, "--format", "json"]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(
        serde_json::from_str::<serde_json::Value>(&json).unwrap()["rows"]
            .as_array()
            .unwrap()
            .len(),
        3
    );

    let (code, _, err) = rigalign(&[
        "--config",
        &cfg,
        "register",
        &rec,
        "--scans",
        "0,1",
        "--out",
        &p("reg.json"),
    ]);
    assert_eq!(code, EXIT_OK, "{err}");
    let reg: serde_json::Value = read_json(Path::new(&p("reg.json"))).unwrap();
    for r in reg["registrations"].as_array().unwrap() {
        assert!(r["result"]["final_residual"].as_f64() <= r["result"]["initial_residual"].as_f64());
    }

    // an assignment file from another recording is refused
    let other = p("other");
    assert_eq!(
        rigalign(&["--config", &cfg, "simulate", "--seed", "99", "--out", &other]).0,
        EXIT_OK
    );
    let (code, _, _) = rigalign(&["evaluate", &other, &p("stamp.json")]);
    assert_eq!(code, EXIT_DATA);
}

#[test]
fn target_matches_frame_without_objects() {
    let tmp = tempfile::tempdir().unwrap();
    let p = |n: &str| tmp.path().join(n).to_str().unwrap().to_owned();
    let cfg = write_config(tmp.path(), 0);
    let rec = p("rec");
    assert_eq!(rigalign(&["--config", &cfg, "simulate", "--out", &rec]).0, EXIT_OK);
    for s in ["frame", "target"] {
        assert_eq!(rigalign(&["align", &rec, "--strategy", s, "--out", &p(s)]).0, EXIT_OK);
    }
    let frame: StrategyRun = read_json(Path::new(&p("frame"))).unwrap();
    let target: StrategyRun = read_json(Path::new(&p("target"))).unwrap();
    assert_eq!(frame.scans, target.scans);
}

fn write_json_config(dir: &Path, cfg: serde_json::Value) -> String {
    let path = dir.join("run.json");
    std::fs::write(&path, serde_json::to_vec_pretty(&cfg).unwrap()).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn manifest_counts_scans_per_vehicle() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_json_config(
        tmp.path(),
        serde_json::json!({"simulate": {"scene": {
            "duration": 30.0,
            "lidar": {"rings": 1, "azimuth_steps": 8},
            "objects": {"count": 0},
            "buildings": {"count": 0}
        }}}),
    );
    let rec = tmp.path().join("rec");
    let (code, _, err) = rigalign(&["--config", &cfg, "simulate", "--out", rec.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK, "{err}");
    let manifest: serde_json::Value = read_json(&rec.join("manifest.json")).unwrap();
    assert_eq!(manifest["total_scans"], 600);
}

#[test]
fn stamp_assigns_every_scan_camera_pair() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), 4);
    let rec = tmp.path().join("rec").to_str().unwrap().to_owned();
    let out = tmp.path().join("stamp.json").to_str().unwrap().to_owned();
    assert_eq!(rigalign(&["--config", &cfg, "simulate", "--out", &rec]).0, EXIT_OK);
    assert_eq!(
        rigalign(&["align", &rec, "--strategy", "stamp", "--out", &out]).0,
        EXIT_OK
    );
    let run: StrategyRun = read_json(Path::new(&out)).unwrap();
    let cameras = rigalign::sim::RigConfig::default().cameras.len();
    assert_eq!(run.scans.len(), 2 * 2);
    for scan in &run.scans {
        assert_eq!(scan.assignments.len(), cameras);
    }
}

#[test]
fn static_recording_scores_perfectly() {
    let tmp = tempfile::tempdir().unwrap();
    let p = |n: &str| tmp.path().join(n).to_str().unwrap().to_owned();
    let still = |x: f64, y: f64| serde_json::json!({"type": "constant_velocity", "x": x, "y": y, "heading_deg": 0.0, "speed": 0.0});
    let cfg = write_json_config(
        tmp.path(),
        serde_json::json!({"simulate": {"scene": {
            "seed": 4,
            "duration": 0.2,
            "lidar": {"rings": 16, "azimuth_steps": 1440},
            "vehicles": [still(0.0, 0.0), still(-12.0, 3.5)],
            "objects": {"count": 8, "relative_speed": [0.0, 0.0]},
            "noise": {"range_sigma": 0.0, "timestamp_jitter": 0.0}
        }}}),
    );
    let rec = p("rec");
    let (code, _, err) = rigalign(&["--config", &cfg, "simulate", "--out", &rec]);
    assert_eq!(code, EXIT_OK, "{err}");
    for s in ["stamp", "frame", "target"] {
        assert_eq!(rigalign(&["align", &rec, "--strategy", s, "--out", &p(s)]).0, EXIT_OK);
    }
    let (code, _, err) = rigalign(&[
        "evaluate",
        &rec,
        &p("stamp"),
        &p("frame"),
        &p("target"),
        "--out",
        &p("eval"),
    ]);
    assert_eq!(code, EXIT_OK, "{err}");
    let report: EvaluationReport = read_json(Path::new(&p("eval/metrics.json"))).unwrap();
    let rows = &report.table.rows;
    assert_eq!(rows.len(), 3);
    for row in rows {
        assert!(row.matches > 0);
        assert!((row.average_iou - 1.0).abs() < 1e-9, "{row:?}");
        assert!(row.recall_at.iter().all(|r| r.recall == 1.0), "{row:?}");
        assert!(row.mean_center_offset_px.unwrap() < 1e-9, "{row:?}");
        assert_eq!(row.matches, rows[0].matches);
    }
}

fn register_config(dir: &Path, second_x: f64, noise: Option<(f64, f64)>) -> String {
    let car = |x: f64, y: f64| serde_json::json!({"type": "constant_velocity", "x": x, "y": y, "heading_deg": 0.0, "speed": 5.0});
    let mut register = serde_json::json!({"scans": [0]});
    if let Some((t, r)) = noise {
        register["chain_noise"] = serde_json::json!({"translation_m": t, "rotation_deg": r, "seed": 2});
    }
    write_json_config(
        dir,
        serde_json::json!({
            "simulate": {"scene": {
                "seed": 11,
                "duration": 0.2,
                "lidar": {"rings": 32, "min_elevation_deg": -25.0, "azimuth_steps": 1440},
                "vehicles": [car(0.0, 0.0), car(second_x, 3.5)],
                "objects": {"count": 0},
                "noise": {"range_sigma": 0.0, "timestamp_jitter": 0.0}
            }},
            "register": register
        }),
    )
}

fn register(cfg: &str, dir: &Path) -> (i32, String, serde_json::Value) {
    let rec = dir.join("rec").to_str().unwrap().to_owned();
    let out = dir.join("reg.json").to_str().unwrap().to_owned();
    let (code, _, err) = rigalign(&["--config", cfg, "simulate", "--out", &rec]);
    assert_eq!(code, EXIT_OK, "{err}");
    let (code, _, err) = rigalign(&["--config", cfg, "register", &rec, "--out", &out]);
    let reg = if code == EXIT_OK {
        read_json(Path::new(&out)).unwrap()
    } else {
        serde_json::Value::Null
    };
    (code, err, reg)
}

#[test]
fn register_exact_pose_stays_on_truth() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, err, reg) = register(&register_config(tmp.path(), -12.0, None), tmp.path());
    assert_eq!(code, EXIT_OK, "{err}");
    let r = &reg["registrations"][0];
    assert!(r["initial_error_m"].as_f64().unwrap() < 1e-9);
    assert!(r["refined_error_m"].as_f64().unwrap() < 0.01, "{r}");
    assert!(r["refined_error_deg"].as_f64().unwrap() < 0.1, "{r}");
}

#[test]
fn register_reduces_calibration_noise_residual() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, err, reg) = register(&register_config(tmp.path(), -12.0, Some((0.02, 0.2))), tmp.path());
    assert_eq!(code, EXIT_OK, "{err}");
    let r = &reg["registrations"][0]["result"];
    assert!(r["final_residual"].as_f64() < r["initial_residual"].as_f64(), "{r}");
}

#[test]
fn register_without_overlap_warns() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, err, reg) = register(&register_config(tmp.path(), -5000.0, None), tmp.path());
    assert_eq!(code, EXIT_OK, "{err}");
    assert_eq!(reg["registrations"][0]["result"]["converged"], false);
    assert!(err.contains("warning"), "{err}");
}
