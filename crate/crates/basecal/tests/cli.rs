mod support;

use std::path::{Path, PathBuf};

use basecal::cli::{run, EXIT_AMBIGUOUS, EXIT_CONFIG, EXIT_IO, EXIT_OK};
use basecal::formats::{read_json, write_json};
use basecal::io::{load, save, Format};
use basecal::workflow::{CalibrationRun, EvaluationRun, ShotSpec, SHOTS_FILE};
use basecal_core::geometry::{rot_x, RigidTransform, Vec3};
use basecal_core::handeye::{CalibrationMode, CalibrationResult, DhRow, DhTable};
use basecal_core::synth::{jitter, shapes};
use serde_json::Value;

fn fixture(case: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(case)
}

struct Output {
    code: i32,
    stdout: String,
    stderr: String,
}

fn basecal(args: &[&str]) -> Output {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = run(
        std::iter::once("basecal").chain(args.iter().copied()),
        &mut out,
        &mut err,
    );
    Output {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn calibrate_args<'a>(case: &'a Path, out: &'a Path, mode: &'a str) -> Vec<String> {
    [
        "calibrate",
        mode,
        "--scan",
        p(&case.join("scan.ply")),
        "--box",
        p(&case.join("box.json")),
        "--model",
        p(&case.join("model.ply")),
        "--dh",
        p(&case.join("dh.json")),
        "--joints",
        p(&case.join("joints.csv")),
        "--out",
        p(out),
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

fn as_refs(v: &[String]) -> Vec<&str> {
    v.iter().map(String::as_str).collect()
}

#[test]
fn end_to_end_fixture_recovers_planted_mount() {
    let case = fixture("end_to_end");
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("calibration.json");
    let r = basecal(&as_refs(&calibrate_args(&case, &out, "eye-in-hand")));
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    assert!(r.stdout.contains("X = ^TCP_Cam T") && r.stdout.contains("translation (mm)"));
    let run: CalibrationRun = read_json(&out).unwrap();
    let truth: Value = read_json(&case.join("truth.json")).unwrap();
    let x_star: RigidTransform = serde_json::from_value(truth["x"].clone()).unwrap();
    let (rot, trans) = support::pose_error(&run.calibration.x, &x_star);
    assert!(rot < truth["tolerance"]["rotation_deg"].as_f64().unwrap(), "{rot} deg");
    assert!(
        trans < truth["tolerance"]["translation_m"].as_f64().unwrap(),
        "{trans} m"
    );
    assert_eq!(run.calibration.mode, CalibrationMode::EyeInHand);
    assert_eq!(run.base_pose.shots_used, 1);

    // The same result comes back inside the envelope, and re-runs are byte-identical.
    let mut args = calibrate_args(&case, &tmp.path().join("again.json"), "eye-in-hand");
    args.push("--json".into());
    let r = basecal(&as_refs(&args));
    let env: Value = serde_json::from_str(&r.stdout).unwrap();
    assert_eq!(env["ok"], Value::Bool(true));
    assert_eq!(env["version"], env!("CARGO_PKG_VERSION"));
    let again: CalibrationRun = serde_json::from_value(env["result"].clone()).unwrap();
    assert_eq!(again, run);
    assert_eq!(
        std::fs::read(&out).unwrap(),
        std::fs::read(tmp.path().join("again.json")).unwrap()
    );
}

#[test]
fn eye_to_hand_reports_the_camera_pose() {
    let case = fixture("end_to_end");
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("c.json");
    let r = basecal(&as_refs(&calibrate_args(&case, &out, "eye-to-hand")));
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    let run: CalibrationRun = read_json(&out).unwrap();
    let truth: Value = read_json(&case.join("truth.json")).unwrap();
    let cam_to_base: RigidTransform = serde_json::from_value(truth["cam_to_base"].clone()).unwrap();
    let (rot, trans) = support::pose_error(&run.calibration.x, &cam_to_base);
    assert!(rot < 0.05 && trans < 1e-4);
    assert!(run.base_to_tcp.is_none());
}

#[test]
fn symmetric_fixture_is_ambiguous() {
    let case = fixture("symmetric");
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("c.json");
    let mut args = calibrate_args(&case, &out, "eye-in-hand");
    let r = basecal(&as_refs(&args));
    assert_eq!(r.code, EXIT_AMBIGUOUS, "{}", r.stderr);
    assert!(r.stderr.contains("ambiguous"));
    assert!(!out.exists());
    args.push("--allow-ambiguous".into());
    let r = basecal(&as_refs(&args));
    assert_eq!(r.code, EXIT_OK);
    assert!(r.stderr.contains("warning: accepted an ambiguous base pose"));
}

#[test]
fn shots_directory_reports_filter_statistics() {
    let case = fixture("end_to_end");
    let tmp = tempfile::tempdir().unwrap();
    let shots = tmp.path().join("shots");
    std::fs::create_dir(&shots).unwrap();
    let scan = load(&case.join("scan.ply")).unwrap();
    for k in 0..25 {
        save(
            &shots.join(format!("shot_{k:02}.ply")),
            &jitter(&scan, 0.0005, k),
            Format::PlyBinaryLe,
        )
        .unwrap();
    }
    let out = tmp.path().join("c.json");
    let mut args = calibrate_args(&case, &out, "eye-in-hand");
    args[2] = "--shots".into();
    args[3] = shots.to_str().unwrap().into();
    let r = basecal(&as_refs(&args));
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    assert!(r.stdout.contains("shots kept: "));
    let run: CalibrationRun = read_json(&out).unwrap();
    assert_eq!(run.base_pose.shots.len(), 25);
    assert!(run.base_pose.shots_used >= 20);
    assert!(run.base_pose.shots.iter().all(|s| s.overlap_ratio.is_some()));
    let truth: Value = read_json(&case.join("truth.json")).unwrap();
    let x_star: RigidTransform = serde_json::from_value(truth["x"].clone()).unwrap();
    let (rot, trans) = support::pose_error(&run.calibration.x, &x_star);
    assert!(rot < 0.3 && trans < 0.001, "{rot} deg {trans} m");
}

#[test]
fn calibrate_input_errors() {
    let case = fixture("end_to_end");
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("c.json");

    let mut args = calibrate_args(&case, &out, "eye-in-hand");
    args[3] = p(&tmp.path().join("missing.ply")).into();
    assert_eq!(basecal(&as_refs(&args)).code, EXIT_IO);

    let mut args = calibrate_args(&case, &out, "eye-in-hand");
    let idx = args.iter().position(|a| a == "--joints").unwrap();
    args[idx + 1] = "0.1,-1.5707963".into();
    let r = basecal(&as_refs(&args));
    assert_eq!(r.code, EXIT_CONFIG);
    assert!(r.stderr.contains("joints"), "{}", r.stderr);

    let mut args = calibrate_args(&case, &out, "eye-in-hand");
    let idx = args.iter().position(|a| a == "--dh").unwrap();
    args.drain(idx..idx + 2);
    let r = basecal(&as_refs(&args));
    assert_eq!(r.code, EXIT_CONFIG);
    assert!(r.stderr.contains("`dh`"));

    let bad = tmp.path().join("scan.xyz");
    std::fs::write(&bad, "0 0 0\n1 2\n").unwrap();
    let mut args = calibrate_args(&case, &out, "eye-in-hand");
    args[3] = p(&bad).into();
    args.push("--json".into());
    let r = basecal(&as_refs(&args));
    assert_eq!(r.code, EXIT_IO);
    let env: Value = serde_json::from_str(&r.stdout).unwrap();
    assert_eq!(env["ok"], Value::Bool(false));
    assert_eq!(env["error"]["code"], 3);
    assert!(env["error"]["message"].as_str().unwrap().contains("line 2"));
}

#[test]
fn synth_needs_a_model() {
    let tmp = tempfile::tempdir().unwrap();
    let r = basecal(&["synth", "--out", p(tmp.path())]);
    assert_eq!(r.code, EXIT_CONFIG);
    assert!(r.stderr.contains("`model`"), "{}", r.stderr);
    let cfg = tmp.path().join("session.json");
    std::fs::write(&cfg, r#"{"model": "nowhere.ply"}"#).unwrap();
    let r = basecal(&["--config", p(&cfg), "synth", "--out", p(tmp.path())]);
    assert_eq!(r.code, EXIT_CONFIG);
    assert!(r.stderr.contains("`model`"));
}

#[test]
fn synth_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let model = tmp.path().join("base.ply");
    save(&model, &shapes::base_model(1500, 3), Format::PlyBinaryLe).unwrap();
    let cfg = tmp.path().join("session.json");
    std::fs::write(
        &cfg,
        r#"{"model": "base.ply", "seed": 9, "synth": {"n_viewpoints": 3, "k_augment": 2}}"#,
    )
    .unwrap();
    let mut manifests = Vec::new();
    for name in ["a", "b"] {
        let dir = tmp.path().join(name);
        let r = basecal(&["--config", p(&cfg), "synth", "--out", p(&dir)]);
        assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
        assert!(r.stdout.starts_with("6 records\n"), "{}", r.stdout);
        let files = std::fs::read_dir(dir.join("records")).unwrap().count();
        assert_eq!(files, 12);
        manifests.push(std::fs::read(dir.join("manifest.json")).unwrap());
    }
    assert_eq!(manifests[0], manifests[1]);
    let r = basecal(&[
        "--config",
        p(&cfg),
        "synth",
        "--out",
        p(&tmp.path().join("c")),
        "--seed",
        "10",
    ]);
    assert_eq!(r.code, EXIT_OK);
    assert_ne!(std::fs::read(tmp.path().join("c/manifest.json")).unwrap(), manifests[0]);
}

#[test]
fn fk_of_zero_table_is_identity() {
    let tmp = tempfile::tempdir().unwrap();
    let dh = tmp.path().join("dh.json");
    let zero = DhRow {
        a: 0.0,
        alpha: 0.0,
        d: 0.0,
        theta_offset: 0.0,
    };
    write_json(&dh, &DhTable::new(vec![zero; 6]).unwrap()).unwrap();
    let r = basecal(&["fk", "--dh", p(&dh), "--joints", "0,0,0,0,0,0"]);
    assert_eq!(r.code, EXIT_OK);
    assert!(
        r.stdout.contains("[  1.000000   0.000000   0.000000       0.0000]"),
        "{}",
        r.stdout
    );
    let r = basecal(&["--json", "fk", "--dh", p(&dh), "--joints", "0,0,0,0,0,0"]);
    let env: Value = serde_json::from_str(&r.stdout).unwrap();
    let t: RigidTransform = serde_json::from_value(env["result"]["base_to_tcp"].clone()).unwrap();
    assert_eq!(t, RigidTransform::identity());
    assert_eq!(basecal(&["fk", "--dh", p(&dh), "--joints", "0,0"]).code, EXIT_CONFIG);
}

#[test]
fn register_identical_files_is_identity() {
    let tmp = tempfile::tempdir().unwrap();
    let cloud = tmp.path().join("c.xyz");
    save(&cloud, &shapes::base_model(2000, 4), Format::XyzAscii).unwrap();
    let out = tmp.path().join("r.json");
    let r = basecal(&[
        "register",
        "--source",
        p(&cloud),
        "--reference",
        p(&cloud),
        "--out",
        p(&out),
    ]);
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    let result: Value = read_json(&out).unwrap();
    let t: RigidTransform = serde_json::from_value(result["transform"].clone()).unwrap();
    assert!(t.max_abs_diff(&RigidTransform::identity()) < 1e-9);
    assert!(result["overlap_ratio"].as_f64().unwrap() > 0.99);
}

#[test]
fn metrics_of_equal_lists_are_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let list = tmp.path().join("t.json");
    let ts: Vec<RigidTransform> = (0..4)
        .map(|k| rot_x(0.3 * k as f64) * RigidTransform::from_translation(Vec3::new(0.1 * k as f64, 0.0, 0.2)))
        .collect();
    write_json(&list, &ts).unwrap();
    let csv = tmp.path().join("pairs.csv");
    let r = basecal(&[
        "--json",
        "metrics",
        "--est",
        p(&list),
        "--gt",
        p(&list),
        "--csv",
        p(&csv),
    ]);
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    let env: Value = serde_json::from_str(&r.stdout).unwrap();
    for key in ["rmse_r", "rmse_t", "rre", "rte", "re"] {
        assert_eq!(env["result"]["summary"][key].as_f64(), Some(0.0), "{key}");
    }
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 5);
    assert_eq!(text.lines().nth(1), Some("0,0,0,0"));
}

/// Plane scans from several robot poses, each seen through the planted mount.
#[test]
fn evaluate_with_exact_calibration_has_no_dynamic_offset() {
    let tmp = tempfile::tempdir().unwrap();
    let table = support::robot();
    let x_star = RigidTransform::new(basecal_core::geometry::rot_y_matrix(0.2), Vec3::new(0.01, -0.02, 0.05));
    let calib = CalibrationResult {
        mode: CalibrationMode::EyeInHand,
        x: x_star,
        x_inverse: x_star.inverse(),
        residual_rotation: 0.0,
        residual_translation: 0.0,
        inputs_digest: "0".into(),
    };
    let calib_path = tmp.path().join("calib.json");
    write_json(&calib_path, &calib).unwrap();
    let dh_path = tmp.path().join("dh.json");
    write_json(&dh_path, &table).unwrap();
    // A board lying flat in the base frame, 0.4 m out along +X.
    let board = basecal_core::cloud::transform(
        &shapes::plane_patch(800, 0.1, 5),
        &RigidTransform::from_translation(Vec3::new(0.4, 0.0, 0.02)),
    );
    let (stat, dynm) = (tmp.path().join("static"), tmp.path().join("dynamic"));
    std::fs::create_dir_all(&stat).unwrap();
    std::fs::create_dir_all(&dynm).unwrap();
    let mut specs = Vec::new();
    let poses = [
        [0.1, -1.6, -1.2, -0.9, 1.5, 0.0],
        [0.3, -1.6, -1.0, -1.1, 1.4, 0.4],
        [-0.2, -1.6, -1.4, -0.6, 1.7, -0.3],
        [0.0, -1.6, -1.1, -1.2, 1.6, 1.0],
    ];
    for (k, q) in poses.iter().enumerate() {
        let tcp =
            basecal_core::handeye::forward_kinematics(&table, &basecal_core::handeye::JointConfig::new(q.to_vec()))
                .unwrap();
        let in_cam = basecal_core::cloud::transform(&board, &(tcp * x_star).inverse());
        let name = format!("shot_{k}.ply");
        save(&dynm.join(&name), &in_cam, Format::PlyBinaryLe).unwrap();
        specs.push(ShotSpec {
            file: name.into(),
            joints: Some(q.to_vec()),
            base_to_cam: None,
        });
        save(&stat.join(format!("s{k}.ply")), &board, Format::PlyBinaryLe).unwrap();
    }
    write_json(&dynm.join(SHOTS_FILE), &specs).unwrap();
    let (report, out) = (tmp.path().join("report.txt"), tmp.path().join("eval.json"));
    let r = basecal(&[
        "evaluate",
        "plane",
        "--static",
        p(&stat),
        "--dynamic",
        p(&dynm),
        "--calib",
        p(&calib_path),
        "--dh",
        p(&dh_path),
        "--report",
        p(&report),
        "--out",
        p(&out),
    ]);
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    let text = std::fs::read_to_string(&report).unwrap();
    assert!(text.contains("offset (dynamic - static)") && text.contains("Median"));
    let run: EvaluationRun = read_json(&out).unwrap();
    for m in &run.offset.metrics {
        let s = &m.stats;
        assert!(
            s.range.max(s.std_dev).max(s.median).max(s.mean) < 1e-9,
            "{} {:?}",
            m.name,
            s
        );
    }
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_basecal");
    let status = std::process::Command::new(bin)
        .args(["fk", "--joints", "0"])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(EXIT_CONFIG));
    assert!(status.stdout.is_empty());
    let status = std::process::Command::new(bin).arg("--version").output().unwrap();
    assert_eq!(status.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&status.stdout).contains(env!("CARGO_PKG_VERSION")));
    let status = std::process::Command::new(bin).arg("frobnicate").output().unwrap();
    assert_eq!(status.status.code(), Some(EXIT_CONFIG));
}
