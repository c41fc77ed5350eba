//! The `rigalign` command line.
//!
//! Settings come from an optional JSON run config (`--config`); command-line
//! flags override the matching config entries. Exit codes: 0 success
//! (including reported non-convergence), 1 usage or config error, 2 data
//! error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::alignment::Strategy;
use crate::error::{Error, Result};
use crate::evaluation::{
    format_latex, format_table, match_records, run_strategy, table_from_records, EvalOptions, MatchRecord,
    MetricsTable, StrategyRun,
};
use crate::geometry::RigidTransform;
use crate::registration::{chain_initial_transform, gicp_refine, RegistrationParams, RegistrationResult};
use crate::scan::deskew_to;
use crate::sim::{simulate_scene, SceneConfig};
use crate::store::{read_json, read_manifest, read_recording, write_atomic, write_json, write_recording, ScanFormat};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

/// Run configuration file: one optional section per command.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub simulate: SimulateSection,
    pub align: AlignSection,
    pub register: RegisterSection,
    pub evaluate: EvaluateSection,
    pub report: ReportSection,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub scene: SceneConfig,
    pub scan_format: ScanFormat,
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlignSection {
    pub recording: Option<PathBuf>,
    pub strategy: Option<Strategy>,
    pub cameras: Option<Vec<String>>,
    pub out: Option<PathBuf>,
}

/// Random perturbation of the source vehicle's LiDAR extrinsic before
/// chaining, to exercise the refinement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainNoise {
    pub translation_m: f64,
    pub rotation_deg: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegisterSection {
    pub recording: Option<PathBuf>,
    pub scans: Vec<usize>,
    pub source_vehicle: usize,
    pub target_vehicle: usize,
    pub params: RegistrationParams,
    pub chain_noise: Option<ChainNoise>,
    pub out: Option<PathBuf>,
}

impl Default for RegisterSection {
    fn default() -> Self {
        RegisterSection {
            recording: None,
            scans: vec![0],
            source_vehicle: 1,
            target_vehicle: 0,
            params: RegistrationParams::default(),
            chain_noise: None,
            out: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSection {
    pub recording: Option<PathBuf>,
    pub assignments: Vec<PathBuf>,
    pub options: EvalOptions,
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Text,
    Json,
    Latex,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportSection {
    pub metrics: Option<PathBuf>,
    pub format: ReportFormat,
}

#[derive(Parser, Debug)]
#[command(
    name = "rigalign",
    version,
    about = "LiDAR/camera/INS spatiotemporal alignment toolkit"
)]
struct Cli {
    /// JSON run config; flags override its entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic two-vehicle recording.
    Simulate(SimulateArgs),
    /// Assign LiDAR points to camera frames for every scan.
    Align(AlignArgs),
    /// Register one vehicle's scans onto the other's.
    Register(RegisterArgs),
    /// Compare alignment runs against ground truth.
    Evaluate(EvaluateArgs),
    /// Render a metrics file.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long)]
    seed: Option<u64>,
    /// Per-sensor clock offset sigma in milliseconds.
    #[arg(long)]
    jitter_ms: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    scan_format: Option<ScanFormatArg>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ScanFormatArg {
    Binary,
    Csv,
}

#[derive(Args, Debug)]
struct AlignArgs {
    recording: Option<PathBuf>,
    #[arg(long, value_parser = parse_strategy)]
    strategy: Option<Strategy>,
    /// Comma-separated camera ids.
    #[arg(long, value_delimiter = ',')]
    cameras: Option<Vec<String>>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RegisterArgs {
    recording: Option<PathBuf>,
    /// Comma-separated scan indices.
    #[arg(long, value_delimiter = ',')]
    scans: Option<Vec<usize>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    recording: Option<PathBuf>,
    /// Assignment files written by `align`; the first is the baseline row.
    assignments: Vec<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    cameras: Option<Vec<String>>,
    /// Output directory for metrics.txt / metrics.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    metrics: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<ReportFormat>,
}

fn parse_strategy(s: &str) -> std::result::Result<Strategy, String> {
    s.parse()
        .map_err(|_| format!("unknown strategy `{s}` (expected stamp, frame or target)"))
}

/// Usage problems detected after parsing.
fn usage(msg: impl Into<String>) -> Error {
    Error::InvalidConfig(msg.into())
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => read_json(p).map_err(|e| usage(format!("config {}: {e}", p.display()))),
    }
}

fn required(flag: Option<PathBuf>, config: Option<PathBuf>, what: &str) -> Result<PathBuf> {
    flag.or(config).ok_or_else(|| usage(format!("missing {what}")))
}

fn existing(path: PathBuf, what: &str) -> Result<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(Error::io(
            format!("{what} {}", path.display()),
            std::io::Error::from(std::io::ErrorKind::NotFound),
        ))
    }
}

/// Outcome of one registration in the `register` output file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegistrationRecord {
    pub scan_index: usize,
    pub initial: RigidTransform,
    /// Inter-LiDAR transform from the exact trajectories.
    pub ground_truth: RigidTransform,
    pub initial_error_m: f64,
    pub initial_error_deg: f64,
    pub refined_error_m: f64,
    pub refined_error_deg: f64,
    pub result: RegistrationResult,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegistrationReport {
    pub recording_id: String,
    pub source_vehicle: usize,
    pub target_vehicle: usize,
    pub params: RegistrationParams,
    pub registrations: Vec<RegistrationRecord>,
}

fn perturb(t: &RigidTransform, noise: &ChainNoise, rng: &mut ChaCha8Rng) -> RigidTransform {
    let mut unit = || {
        let v: Vector3<f64> = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        v / v.norm().max(1e-12)
    };
    let dt = unit() * noise.translation_m;
    let dr = UnitQuaternion::from_scaled_axis(unit() * noise.rotation_deg.to_radians());
    RigidTransform::new(
        dr * t.rotation(),
        t.translation() + dt,
        t.source_frame().clone(),
        t.target_frame().clone(),
    )
}

fn cmd_simulate(cfg: RunConfig, args: SimulateArgs, log: &mut dyn Write) -> Result<()> {
    let mut scene = cfg.simulate.scene;
    if let Some(seed) = args.seed {
        scene.seed = seed;
    }
    if let Some(ms) = args.jitter_ms {
        scene.noise.timestamp_jitter = ms / 1000.0;
    }
    let format = match args.scan_format {
        Some(ScanFormatArg::Binary) => ScanFormat::Binary,
        Some(ScanFormatArg::Csv) => ScanFormat::Csv,
        None => cfg.simulate.scan_format,
    };
    let out = required(args.out, cfg.simulate.out, "--out directory")?;
    scene.validate()?;
    let rec = simulate_scene(&scene)?;
    let manifest = write_recording(&out, &rec, format)?;
    let _ = writeln!(
        log,
        "wrote {} ({} scans, recording {})",
        out.display(),
        manifest.total_scans,
        &manifest.recording_id[..16]
    );
    Ok(())
}

fn cmd_align(cfg: RunConfig, args: AlignArgs, log: &mut dyn Write) -> Result<()> {
    let dir = existing(
        required(args.recording, cfg.align.recording, "recording directory")?,
        "recording",
    )?;
    let strategy = args
        .strategy
        .or(cfg.align.strategy)
        .ok_or_else(|| usage("missing --strategy"))?;
    let cameras = args.cameras.or(cfg.align.cameras);
    let out = args
        .out
        .or(cfg.align.out)
        .unwrap_or_else(|| PathBuf::from(format!("assignments_{strategy}.json")));
    let (manifest, rec) = read_recording(&dir)?;
    if let Some(ids) = &cameras {
        for id in ids {
            if rec.vehicles.iter().all(|v| v.camera(id).is_none()) {
                return Err(usage(format!("unknown camera `{id}`")));
            }
        }
    }
    let run = run_strategy(&rec, &manifest.recording_id, strategy, cameras.as_deref())?;
    write_json(&out, &run)?;
    let n: usize = run.scans.iter().map(|s| s.assignments.len()).sum();
    let _ = writeln!(log, "wrote {} ({n} assignments)", out.display());
    Ok(())
}

fn cmd_register(cfg: RunConfig, args: RegisterArgs, log: &mut dyn Write) -> Result<()> {
    let section = cfg.register;
    let dir = existing(
        required(args.recording, section.recording, "recording directory")?,
        "recording",
    )?;
    let scans = args.scans.unwrap_or(section.scans);
    let mut noise = section.chain_noise;
    if let (Some(seed), Some(n)) = (args.seed, noise.as_mut()) {
        n.seed = seed;
    }
    let out = args
        .out
        .or(section.out)
        .unwrap_or_else(|| PathBuf::from("registration.json"));
    let params = section.params;
    params.validate()?;

    let (manifest, rec) = read_recording(&dir)?;
    let (si, ti) = (section.source_vehicle, section.target_vehicle);
    let (Some(src), Some(tgt)) = (rec.vehicles.get(si), rec.vehicles.get(ti)) else {
        return Err(usage(format!("vehicles {si} and {ti} are not both in the recording")));
    };
    if si == ti {
        return Err(usage("source and target vehicle must differ"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(noise.as_ref().map_or(0, |n| n.seed));
    let mut registrations = Vec::new();
    for &k in &scans {
        let (Some(s_scan), Some(t_scan)) = (src.scans.get(k), tgt.scans.get(k)) else {
            return Err(usage(format!("scan {k} does not exist for both vehicles")));
        };
        let (s_ref, t_ref) = (s_scan.scan_start, t_scan.scan_start);
        let source = deskew_to(s_scan, &src.trajectory, &src.lidar_extrinsic, s_ref)?;
        let target = deskew_to(t_scan, &tgt.trajectory, &tgt.lidar_extrinsic, t_ref)?;
        let src_ext = match &noise {
            Some(n) => perturb(&src.lidar_extrinsic, n, &mut rng),
            None => src.lidar_extrinsic.clone(),
        };
        let initial = chain_initial_transform(
            &tgt.lidar_extrinsic,
            &tgt.trajectory.interpolate(t_ref)?,
            &src.trajectory.interpolate(s_ref)?,
            &src_ext,
        )?;
        let ground_truth = chain_initial_transform(
            &tgt.lidar_extrinsic,
            &tgt.trajectory.interpolate(t_ref)?,
            &src.trajectory.interpolate(s_ref)?,
            &src.lidar_extrinsic,
        )?;
        let result = gicp_refine(&source, &target, &initial, &params)?;
        if !result.converged {
            let _ = writeln!(
                log,
                "warning: scan {k} did not converge after {} iterations",
                result.iterations
            );
        }
        registrations.push(RegistrationRecord {
            scan_index: k,
            initial_error_m: initial.distance_to(&ground_truth),
            initial_error_deg: initial.angle_to(&ground_truth).to_degrees(),
            refined_error_m: result.transform.distance_to(&ground_truth),
            refined_error_deg: result.transform.angle_to(&ground_truth).to_degrees(),
            initial,
            ground_truth,
            result,
        });
    }
    let report = RegistrationReport {
        recording_id: manifest.recording_id,
        source_vehicle: si,
        target_vehicle: ti,
        params,
        registrations,
    };
    write_json(&out, &report)?;
    for r in &report.registrations {
        let _ = writeln!(
            log,
            "scan {}: residual {:.4} -> {:.4} m, error {:.4} m / {:.4} deg",
            r.scan_index, r.result.initial_residual, r.result.final_residual, r.refined_error_m, r.refined_error_deg
        );
    }
    Ok(())
}

/// Evaluation output: the table plus the per-strategy match records.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub recording_id: String,
    pub table: MetricsTable,
    pub records: Vec<Vec<MatchRecord>>,
}

fn cmd_evaluate(cfg: RunConfig, args: EvaluateArgs, log: &mut dyn Write) -> Result<()> {
    let section = cfg.evaluate;
    let dir = existing(
        required(args.recording, section.recording, "recording directory")?,
        "recording",
    )?;
    let files = if args.assignments.is_empty() {
        section.assignments
    } else {
        args.assignments
    };
    if files.is_empty() {
        return Err(usage("no assignment files given"));
    }
    let mut options = section.options;
    if let Some(c) = args.cameras {
        options.cameras = Some(c);
    }
    options.validate()?;
    let out = args.out.or(section.out).unwrap_or_else(|| PathBuf::from("."));

    let manifest = read_manifest(&dir)?;
    let runs: Vec<StrategyRun> = files
        .iter()
        .map(|f| read_json(&existing(f.clone(), "assignment file")?))
        .collect::<Result<_>>()?;
    for (f, run) in files.iter().zip(&runs) {
        if run.recording_id != manifest.recording_id {
            return Err(Error::SceneMismatch(format!(
                "{} was produced from recording {}, not {}",
                f.display(),
                run.recording_id,
                manifest.recording_id
            )));
        }
    }
    let (_, rec) = read_recording(&dir)?;
    let records = match_records(&rec, &runs, &options)?;
    let table = table_from_records(
        runs.iter().map(|r| r.strategy).zip(records.iter().map(Vec::as_slice)),
        &options,
    )?;
    let text = format_table(&table);
    std::fs::create_dir_all(&out).map_err(|e| Error::io(format!("creating {}", out.display()), e))?;
    let report = EvaluationReport {
        recording_id: manifest.recording_id,
        table,
        records,
    };
    write_json(&out.join("metrics.json"), &report)?;
    write_atomic(&out.join("metrics.txt"), text.as_bytes())?;
    let _ = write!(log, "{text}");
    Ok(())
}

fn cmd_report(cfg: RunConfig, args: ReportArgs, stdout: &mut dyn Write) -> Result<()> {
    let path = existing(
        required(args.metrics, cfg.report.metrics, "metrics file")?,
        "metrics file",
    )?;
    let format = args.format.unwrap_or(cfg.report.format);
    let report: EvaluationReport = read_json(&path)?;
    let text = match format {
        ReportFormat::Text => format_table(&report.table),
        ReportFormat::Latex => format_latex(&report.table),
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(&report.table)?;
            s.push('\n');
            s
        }
    };
    stdout
        .write_all(text.as_bytes())
        .map_err(|e| Error::io("writing report", e))
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidConfig(_) => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

/// Runs the CLI on `args` (including the program name), writing normal
/// output to `stdout` and diagnostics to `stderr`. Returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let target: &mut dyn Write = if code == EXIT_OK { stdout } else { stderr };
            let _ = write!(target, "{}", e.render());
            return code;
        }
    };
    let result = load_config(cli.config.as_deref()).and_then(|cfg| match cli.command {
        Command::Simulate(a) => cmd_simulate(cfg, a, stderr),
        Command::Align(a) => cmd_align(cfg, a, stderr),
        Command::Register(a) => cmd_register(cfg, a, stderr),
        Command::Evaluate(a) => cmd_evaluate(cfg, a, stdout),
        Command::Report(a) => cmd_report(cfg, a, stdout),
    });
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}
