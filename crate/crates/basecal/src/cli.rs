//! The `basecal` command line.
//!
//! Every subcommand prints human-readable text on stdout, or with `--json` a single
//! envelope `{"ok", "result" | "error", "version"}`. Lengths print in millimetres and are
//! stored in meters. Exit codes: 0 success, 1 other failure, 2 configuration or usage
//! error, 3 I/O error, 4 ambiguous base pose, 5 registration failure.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use basecal_core::basepose::{OrThreshold, ReferenceModel};
use basecal_core::evalharness::Shape;
use basecal_core::geometry::{to_euler, RigidTransform};
use basecal_core::handeye::{forward_kinematics, CalibrationMode, CalibrationResult, JointConfig};
use basecal_core::metrics::{pair_error, rmse_transform};
use basecal_core::registration::register;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::SessionConfig;
use crate::dataset::generate_dataset;
use crate::error::Error;
use crate::formats::{read_box, read_dh, read_joints, read_json, read_transform_list, write_json};
use crate::io::{self, Units};
use crate::workflow::{self, CalibrationRun};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_AMBIGUOUS: i32 = 4;
pub const EXIT_REGISTRATION: i32 = 5;

/// Environment variable holding the log level (`off`, `error`, `warn`, `info`).
pub const LOG_ENV: &str = "BASECAL_LOG";

#[derive(Parser, Debug)]
#[command(
    name = "basecal",
    version,
    about = "Hand-eye calibration from point clouds of the robot base"
)]
pub struct Cli {
    /// Session config (JSON); flags override its fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Print only the JSON envelope on stdout.
    #[arg(long, global = true)]
    pub json: bool,
    /// Units of input clouds that do not declare any.
    #[arg(long, global = true)]
    pub units: Option<Units>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic registration dataset from a reference model.
    Synth(SynthArgs),
    /// Register a source cloud onto a reference cloud.
    Register(RegisterArgs),
    /// Solve the hand-eye transform from a scan of the robot base.
    Calibrate {
        #[command(subcommand)]
        mode: CalibrateMode,
    },
    /// Fit a plane or sphere to static and dynamic scans and report the offsets.
    Evaluate(EvaluateArgs),
    /// Compare estimated transforms against ground truth.
    Metrics(MetricsArgs),
    /// Forward kinematics of a DH table.
    Fk(FkArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Reference model of the base; defaults to the config's `model`
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub viewpoints: Option<usize>,
    #[arg(long)]
    pub augment: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Per-axis Gaussian noise added to every view, in millimetres.
    #[arg(long)]
    pub jitter_mm: Option<f64>,
    /// Defaults to the model's file stem.
    #[arg(long)]
    pub reference_id: Option<String>,
}

#[derive(Args, Debug, Default)]
pub struct MatchArgs {
    /// Voxel edge in meters.
    #[arg(long)]
    pub voxel: Option<f64>,
    /// Correspondence gate as a multiple of the average point spacing.
    #[arg(long)]
    pub tau_factor: Option<f64>,
}

#[derive(Args, Debug)]
pub struct RegisterArgs {
    #[arg(long)]
    pub source: PathBuf,
    #[arg(long)]
    pub reference: PathBuf,
    /// Write the result JSON here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub matching: MatchArgs,
}

#[derive(Subcommand, Debug)]
pub enum CalibrateMode {
    /// Camera on the arm: solves ^TCP_Cam T.
    EyeInHand(CalibrateArgs),
    /// Camera fixed in the cell: solves ^Cam_Base T.
    EyeToHand(CalibrateArgs),
}

#[derive(Args, Debug)]
#[group(id = "input", required = true, multiple = false, args = ["scan", "shots"])]
pub struct CalibrateArgs {
    /// One scan of the scene.
    #[arg(long)]
    pub scan: Option<PathBuf>,
    /// Directory of repeated scans taken at the same robot pose.
    #[arg(long)]
    pub shots: Option<PathBuf>,
    /// Box around the base in camera coordinates (JSON, meters).
    #[arg(long = "box")]
    pub bbox: PathBuf,
    /// Reference model of the base; defaults to the config's `model`
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// DH table (JSON); defaults to the config's `dh`
    #[arg(long)]
    pub dh: Option<PathBuf>,
    /// Joint angles, inline ("q1,q2,...") or a file.
    #[arg(long)]
    pub joints: String,
    /// Joint angles are in degrees.
    #[arg(long)]
    pub degrees: bool,
    /// Accept a base pose that several model orientations explain equally well.
    #[arg(long)]
    pub allow_ambiguous: bool,
    /// Keep shots whose overlap is at least this fraction of the best shot's.
    #[arg(long, conflicts_with = "or_absolute")]
    pub or_relative: Option<f64>,
    /// Keep shots whose overlap is at least this value.
    #[arg(long)]
    pub or_absolute: Option<f64>,
    /// Write the result JSON here (defaults to calibration.json in the output directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub matching: MatchArgs,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ShapeArg {
    Plane,
    Sphere,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    pub shape: ShapeArg,
    /// Directory of scans from one fixed pose.
    #[arg(long = "static")]
    pub static_dir: PathBuf,
    /// Directory of scans from several poses, with a `shots.json` giving each pose.
    #[arg(long)]
    pub dynamic: PathBuf,
    /// Calibration result JSON.
    #[arg(long)]
    pub calib: PathBuf,
    /// DH table (JSON); defaults to the config's `dh`
    #[arg(long)]
    pub dh: Option<PathBuf>,
    /// Crop every scan to this box (camera coordinates) before fitting.
    #[arg(long = "box")]
    pub bbox: Option<PathBuf>,
    /// Write the text tables here.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Write the result JSON here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct MetricsArgs {
    /// JSON list of estimated transforms.
    #[arg(long)]
    pub est: PathBuf,
    /// JSON list of ground-truth transforms (a dataset manifest works).
    #[arg(long)]
    pub gt: PathBuf,
    /// Write per-pair errors as CSV here.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct FkArgs {
    /// DH table (JSON); defaults to the config's `dh`
    #[arg(long)]
    pub dh: Option<PathBuf>,
    #[arg(long)]
    pub joints: String,
    #[arg(long)]
    pub degrees: bool,
}

/// A failed command: exit code, a short machine-readable kind and a message.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub kind: &'static str,
    pub message: String,
}

impl Failure {
    fn new(code: i32, kind: &'static str, message: impl Into<String>) -> Self {
        Self {
            code,
            kind,
            message: message.into(),
        }
    }

    /// `computation` is the code for numerical failures of the command's core step.
    fn from_error(e: Error, computation: i32) -> Self {
        use basecal_core::Error as Core;
        let message = e.to_string();
        match e {
            Error::Io { .. } | Error::Parse { .. } | Error::UnsupportedFormat { .. } => {
                Self::new(EXIT_IO, "io", message)
            }
            Error::Json { .. } | Error::Config { .. } => Self::new(EXIT_CONFIG, "config", message),
            Error::Core(
                Core::LengthMismatch { .. }
                | Core::InvalidParameter { .. }
                | Core::NonPositiveVoxel(_)
                | Core::InvalidRange(_)
                | Core::InvalidTransform(_),
            ) => Self::new(EXIT_CONFIG, "config", message),
            Error::Core(_) if computation == EXIT_REGISTRATION => Self::new(computation, "registration", message),
            Error::Core(_) => Self::new(computation, "computation", message),
        }
    }
}

/// What a successful command hands back.
pub struct Outcome {
    pub result: Value,
    pub human: String,
    pub warnings: Vec<String>,
}

#[derive(Clone, Copy, PartialEq, PartialOrd)]
enum Level {
    Off,
    Error,
    Warn,
    Info,
}

fn log_level() -> Level {
    match std::env::var(LOG_ENV).unwrap_or_default().to_ascii_lowercase().as_str() {
        "off" | "none" => Level::Off,
        "error" => Level::Error,
        "info" | "debug" | "trace" => Level::Info,
        _ => Level::Warn,
    }
}

fn envelope(body: (&str, Value)) -> Value {
    let mut m = serde_json::Map::new();
    m.insert("ok".into(), Value::Bool(body.0 == "result"));
    m.insert(body.0.into(), body.1);
    m.insert("version".into(), Value::String(env!("CARGO_PKG_VERSION").into()));
    Value::Object(m)
}

/// Runs the CLI on `args` (program name first) and returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                stderr.write_all(text.as_bytes())
            } else {
                stdout.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let level = log_level();
    let json = cli.json;
    let started = std::time::Instant::now();
    let outcome = dispatch(cli);
    if level >= Level::Info {
        let _ = writeln!(
            stderr,
            "info: finished in {:.0} ms",
            started.elapsed().as_secs_f64() * 1000.0
        );
    }
    match outcome {
        Ok(out) => {
            if level >= Level::Warn {
                for w in &out.warnings {
                    let _ = writeln!(stderr, "warning: {w}");
                }
            }
            let text = if json {
                let mut s = serde_json::to_string_pretty(&envelope(("result", out.result))).expect("json");
                s.push('\n');
                s
            } else {
                out.human
            };
            let _ = stdout.write_all(text.as_bytes());
            EXIT_OK
        }
        Err(f) => {
            if level >= Level::Error {
                let _ = writeln!(stderr, "error: {}", f.message);
            }
            if json {
                let err = json!({"code": f.code, "kind": f.kind, "message": f.message});
                let _ = writeln!(
                    stdout,
                    "{}",
                    serde_json::to_string_pretty(&envelope(("error", err))).expect("json")
                );
            }
            f.code
        }
    }
}

fn dispatch(cli: Cli) -> Result<Outcome, Failure> {
    let mut cfg = match &cli.config {
        Some(p) => SessionConfig::load(p).map_err(|e| Failure::from_error(e, EXIT_FAILURE))?,
        None => SessionConfig::default(),
    };
    if cli.units.is_some() {
        cfg.units = cli.units;
    }
    match cli.command {
        Command::Synth(a) => cmd_synth(cfg, a),
        Command::Register(a) => cmd_register(cfg, a),
        Command::Calibrate { mode } => match mode {
            CalibrateMode::EyeInHand(a) => cmd_calibrate(cfg, CalibrationMode::EyeInHand, a),
            CalibrateMode::EyeToHand(a) => cmd_calibrate(cfg, CalibrationMode::EyeToHand, a),
        },
        Command::Evaluate(a) => cmd_evaluate(cfg, a),
        Command::Metrics(a) => cmd_metrics(a),
        Command::Fk(a) => cmd_fk(cfg, a),
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("serializable result")
}

fn apply_matching(cfg: &mut SessionConfig, m: &MatchArgs) {
    if let Some(v) = m.voxel {
        cfg.match_params.voxel = v;
    }
    if let Some(v) = m.tau_factor {
        cfg.match_params.tau_factor = v;
    }
}

/// Rows of the homogeneous matrix with the translation column in millimetres.
pub fn format_transform_mm(t: &RigidTransform) -> String {
    let mut s = String::new();
    for i in 0..3 {
        let _ = writeln!(
            s,
            "  [{:>10.6} {:>10.6} {:>10.6} {:>12.4}]",
            t.rotation[(i, 0)],
            t.rotation[(i, 1)],
            t.rotation[(i, 2)],
            t.translation[i] * 1000.0
        );
    }
    let _ = writeln!(s, "  [{:>10.6} {:>10.6} {:>10.6} {:>12.4}]", 0.0, 0.0, 0.0, 1.0);
    s
}

fn format_pose(t: &RigidTransform) -> String {
    let e = to_euler(&t.rotation);
    let mut s = format_transform_mm(t);
    let _ = writeln!(
        s,
        "  euler ZYX (deg): alpha {:.4}  beta {:.4}  gamma {:.4}{}",
        e.alpha.to_degrees(),
        e.beta.to_degrees(),
        e.gamma.to_degrees(),
        if e.gimbal_lock { "  (gimbal lock)" } else { "" }
    );
    let _ = writeln!(
        s,
        "  translation (mm): {:.4} {:.4} {:.4}",
        t.translation.x * 1000.0,
        t.translation.y * 1000.0,
        t.translation.z * 1000.0
    );
    s
}

fn cmd_synth(cfg: SessionConfig, a: SynthArgs) -> Result<Outcome, Failure> {
    let fail = |e| Failure::from_error(e, EXIT_FAILURE);
    let mut cfg = cfg;
    if a.model.is_some() {
        cfg.model = a.model;
    }
    if a.out.is_some() {
        cfg.output_dir = a.out;
    }
    if a.seed.is_some() {
        cfg.seed = a.seed;
    }
    if let Some(n) = a.viewpoints {
        cfg.synth.n_viewpoints = n;
    }
    if let Some(k) = a.augment {
        cfg.synth.k_augment = k;
    }
    if let Some(j) = a.jitter_mm {
        cfg.synth.jitter_sigma = j * 1e-3;
    }
    cfg.validate().map_err(fail)?;
    let model = cfg.require("model", &cfg.model).map_err(fail)?;
    let out_dir = cfg.require("output_dir", &cfg.output_dir).map_err(fail)?;
    let params = cfg.synth_params();
    let summary = generate_dataset(model, a.reference_id.as_deref(), &params, out_dir, cfg.units).map_err(fail)?;
    let human = format!(
        "{} records\nmanifest: {}\n",
        summary.records,
        summary.manifest_path.display()
    );
    Ok(Outcome {
        result: json!({
            "records": summary.records,
            "manifest": summary.manifest_path,
            "seed": params.seed,
        }),
        human,
        warnings: Vec::new(),
    })
}

fn cmd_register(mut cfg: SessionConfig, a: RegisterArgs) -> Result<Outcome, Failure> {
    let fail = |e| Failure::from_error(e, EXIT_REGISTRATION);
    apply_matching(&mut cfg, &a.matching);
    cfg.validate().map_err(fail)?;
    let source = io::load_with(&a.source, cfg.units).map_err(fail)?;
    let reference = io::load_with(&a.reference, cfg.units).map_err(fail)?;
    let r = register(&source, &reference, &cfg.match_params).map_err(|e| fail(e.into()))?;
    if let Some(out) = &a.out {
        write_json(out, &r).map_err(fail)?;
    }
    let mut human = format!(
        "source -> reference (translation in mm):\n{}",
        format_pose(&r.transform)
    );
    let _ = writeln!(
        human,
        "overlap {:.3}  inlier rmse {:.3} mm  iterations {}  converged {}{}",
        r.overlap_ratio,
        r.inlier_rmse * 1000.0,
        r.iterations,
        r.converged,
        if r.ambiguous { "  AMBIGUOUS" } else { "" }
    );
    let warnings = if r.ambiguous {
        vec![format!("competing poses differ by up to {:.1} deg", r.pose_spread_deg)]
    } else {
        Vec::new()
    };
    Ok(Outcome {
        result: to_value(&r),
        human,
        warnings,
    })
}

fn cmd_calibrate(mut cfg: SessionConfig, mode: CalibrationMode, a: CalibrateArgs) -> Result<Outcome, Failure> {
    let fail = |e| Failure::from_error(e, EXIT_REGISTRATION);
    apply_matching(&mut cfg, &a.matching);
    if a.model.is_some() {
        cfg.model = a.model.clone();
    }
    if a.dh.is_some() {
        cfg.dh = a.dh.clone();
    }
    if let Some(f) = a.or_relative {
        cfg.or_threshold = OrThreshold::Relative(f);
    }
    if let Some(v) = a.or_absolute {
        cfg.or_threshold = OrThreshold::Absolute(v);
    }
    cfg.validate().map_err(fail)?;
    let model_path = cfg.require("model", &cfg.model).map_err(fail)?;
    let dh = match (&cfg.dh, mode) {
        (Some(p), _) => Some(read_dh(p).map_err(fail)?),
        (None, CalibrationMode::EyeInHand) => {
            return Err(fail(Error::config("dh", "is required for eye-in-hand calibration")));
        }
        (None, CalibrationMode::EyeToHand) => None,
    };
    let joints = read_joints(&a.joints, a.degrees).map_err(fail)?;
    let bbox = read_box(&a.bbox).map_err(fail)?;
    let shots = match (&a.scan, &a.shots) {
        (Some(scan), _) => vec![io::load_with(scan, cfg.units).map_err(fail)?],
        (None, Some(dir)) => workflow::load_shot_dir(dir, cfg.units)
            .map_err(fail)?
            .into_iter()
            .map(|s| s.cloud)
            .collect(),
        (None, None) => unreachable!("clap requires one input"),
    };
    let cloud = io::load_with(model_path, cfg.units).map_err(fail)?;
    let model = ReferenceModel::new(cloud, cfg.model_adjust.unwrap_or_else(RigidTransform::identity), 1.0)
        .map_err(|e| Failure::from_error(Error::config("model", e.to_string()), EXIT_CONFIG))?;
    let prepared = model.prepare(&cfg.match_params).map_err(|e| fail(e.into()))?;
    let run = workflow::calibrate(
        mode,
        &shots,
        &bbox,
        &model,
        &prepared,
        &joints,
        dh.as_ref(),
        cfg.or_threshold,
    )
    .map_err(fail)?;
    if run.ambiguous() && !a.allow_ambiguous {
        let spread = run.base_pose.shots.iter().filter(|s| s.kept && s.ambiguous).count();
        return Err(Failure::new(
            EXIT_AMBIGUOUS,
            "ambiguous-pose",
            format!(
                "the base pose is ambiguous in {spread} kept shot(s): distinct model orientations fit equally well; \
                 pass --allow-ambiguous to accept it"
            ),
        ));
    }
    let out_path = a.out.clone().unwrap_or_else(|| {
        cfg.output_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from("."))
            .join("calibration.json")
    });
    write_json(&out_path, &run).map_err(fail)?;
    let mut warnings = run.warnings.clone();
    if run.ambiguous() {
        warnings.push("accepted an ambiguous base pose".into());
    }
    Ok(Outcome {
        result: to_value(&run),
        human: render_calibration(&run, &out_path),
        warnings,
    })
}

fn render_calibration(run: &CalibrationRun, out: &Path) -> String {
    let c = &run.calibration;
    let name = match c.mode {
        CalibrationMode::EyeInHand => "X = ^TCP_Cam T",
        CalibrationMode::EyeToHand => "X = ^Cam_Base T",
    };
    let mut s = format!("{name} (translation in mm):\n{}", format_pose(&c.x));
    if c.mode == CalibrationMode::EyeToHand {
        let _ = write!(s, "camera pose ^Base_Cam T:\n{}", format_pose(&c.x_inverse));
    }
    let _ = writeln!(
        s,
        "residual: {:.3e} deg, {:.3e} mm",
        c.residual_rotation,
        c.residual_translation * 1000.0
    );
    let bp = &run.base_pose;
    let kept = bp.shots.iter().filter(|s| s.kept).count();
    let threshold = match bp.threshold {
        OrThreshold::Relative(f) => format!("relative {f}"),
        OrThreshold::Absolute(v) => format!("absolute {v}"),
    };
    let _ = writeln!(
        s,
        "shots kept: {kept}/{} (threshold {threshold}), mean overlap {:.3}",
        bp.shots.len(),
        bp.overlap_ratio
    );
    if bp.shots.len() > 1 {
        for shot in &bp.shots {
            let _ = writeln!(
                s,
                "  shot {:>3}: {} roi {:>6} overlap {}",
                shot.index,
                if shot.kept { "kept    " } else { "rejected" },
                shot.roi_points,
                shot.overlap_ratio.map_or_else(|| "-".into(), |o| format!("{o:.3}"))
            );
        }
    }
    let _ = writeln!(s, "inputs digest {}", c.inputs_digest);
    let _ = writeln!(s, "result: {}", out.display());
    s
}

fn read_calibration(path: &Path) -> Result<CalibrationResult, Error> {
    let v: Value = read_json(path)?;
    let inner = match v {
        Value::Object(mut m) if m.contains_key("calibration") => m.remove("calibration").expect("present"),
        other => other,
    };
    serde_json::from_value(inner).map_err(|source| Error::Json {
        path: path.into(),
        source,
    })
}

fn cmd_evaluate(mut cfg: SessionConfig, a: EvaluateArgs) -> Result<Outcome, Failure> {
    let fail = |e| Failure::from_error(e, EXIT_FAILURE);
    if a.dh.is_some() {
        cfg.dh = a.dh.clone();
    }
    cfg.validate().map_err(fail)?;
    let shape = match a.shape {
        ShapeArg::Plane => Shape::Plane,
        ShapeArg::Sphere => Shape::Sphere,
    };
    let calib = read_calibration(&a.calib).map_err(fail)?;
    let dh = cfg.dh.as_deref().map(read_dh).transpose().map_err(fail)?;
    let bbox = a.bbox.as_deref().map(read_box).transpose().map_err(fail)?;
    let static_shots: Vec<_> = workflow::load_shot_dir(&a.static_dir, cfg.units)
        .map_err(fail)?
        .into_iter()
        .map(|s| s.cloud)
        .collect();
    let dynamic_shots = workflow::load_shot_dir(&a.dynamic, cfg.units)
        .map_err(fail)?
        .into_iter()
        .map(|s| Ok((workflow::camera_pose(&calib, &s.spec, dh.as_ref())?, s.cloud)))
        .map(|r: Result<_, Error>| r.map(|(pose, cloud)| (cloud, pose)))
        .collect::<Result<Vec<_>, Error>>()
        .map_err(fail)?;
    let run =
        workflow::evaluate(shape, &static_shots, &dynamic_shots, bbox.as_ref(), &cfg.match_params).map_err(fail)?;
    let human = run.render();
    if let Some(p) = &a.report {
        std::fs::write(p, &human).map_err(|e| {
            fail(Error::Io {
                path: p.clone(),
                source: e,
            })
        })?;
    }
    if let Some(p) = &a.out {
        write_json(p, &run).map_err(fail)?;
    }
    Ok(Outcome {
        result: to_value(&run),
        human,
        warnings: Vec::new(),
    })
}

fn cmd_metrics(a: MetricsArgs) -> Result<Outcome, Failure> {
    let fail = |e| Failure::from_error(e, EXIT_FAILURE);
    let est = read_transform_list(&a.est).map_err(fail)?;
    let gt = read_transform_list(&a.gt).map_err(fail)?;
    let summary = rmse_transform(&est, &gt).map_err(|e| fail(e.into()))?;
    let pairs = est
        .iter()
        .zip(&gt)
        .map(|(e, g)| pair_error(e, g))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| fail(e.into()))?;
    if let Some(p) = &a.csv {
        let mut csv = String::from("index,rre_deg,rte_m,re_deg\n");
        for (i, pe) in pairs.iter().enumerate() {
            let _ = writeln!(csv, "{i},{},{},{}", pe.rre, pe.rte, pe.re);
        }
        std::fs::write(p, csv).map_err(|e| {
            fail(Error::Io {
                path: p.clone(),
                source: e,
            })
        })?;
    }
    if let Some(p) = &a.out {
        write_json(p, &summary).map_err(fail)?;
    }
    let human = format!(
        "pairs {}\nRRE {:.6} deg  RTE {:.6} mm  RE {:.6} deg\nRMSE(R) {:.6e}  RMSE(t) {:.6} mm\n",
        est.len(),
        summary.rre,
        summary.rte * 1000.0,
        summary.re,
        summary.rmse_r,
        summary.rmse_t * 1000.0
    );
    Ok(Outcome {
        result: json!({"summary": summary, "pairs": pairs}),
        human,
        warnings: Vec::new(),
    })
}

fn cmd_fk(mut cfg: SessionConfig, a: FkArgs) -> Result<Outcome, Failure> {
    let fail = |e| Failure::from_error(e, EXIT_FAILURE);
    if a.dh.is_some() {
        cfg.dh = a.dh.clone();
    }
    cfg.validate().map_err(fail)?;
    let table = read_dh(cfg.require("dh", &cfg.dh).map_err(fail)?).map_err(fail)?;
    let joints = read_joints(&a.joints, a.degrees).map_err(fail)?;
    let tcp = forward_kinematics(&table, &JointConfig::new(joints)).map_err(|e| fail(e.into()))?;
    Ok(Outcome {
        result: json!({"base_to_tcp": tcp}),
        human: format!("^Base_TCP T (translation in mm):\n{}", format_pose(&tcp)),
        warnings: Vec::new(),
    })
}
