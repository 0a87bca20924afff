//! The calibration and evaluation pipelines behind the CLI, usable without it.

use std::path::{Path, PathBuf};

use basecal_core::basepose::{
    filtered_base_pose_prepared, BasePoseEstimate, OrThreshold, PreparedModel, ReferenceModel,
};
use basecal_core::evalharness::{dynamic_test_with, offset_report, static_test, Shape, TestReport};
use basecal_core::geometry::RigidTransform;
use basecal_core::handeye::{
    forward_kinematics, solve_eye_to_hand, solve_single_shot_eye_in_hand, CalibrationMode, CalibrationResult, DhTable,
    JointConfig,
};
use basecal_core::registration::MatchParams;
use basecal_core::{Aabb, PointCloud};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formats::read_json;
use crate::io::{self, Units};

/// A calibration together with what produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRun {
    pub calibration: CalibrationResult,
    /// Radians.
    pub joints: Vec<f64>,
    /// `^Base_TCP T` at `joints`; eye-in-hand only.
    pub base_to_tcp: Option<RigidTransform>,
    pub base_pose: BasePoseEstimate,
    pub warnings: Vec<String>,
}

impl CalibrationRun {
    pub fn ambiguous(&self) -> bool {
        self.base_pose.ambiguous
    }
}

/// RoI extraction, registration and pose assembly on every shot, the overlap filter, then
/// the hand-eye solve. `joints[0]` is the first joint angle that gets undone; a second
/// joint away from the model's pose only adds a warning.
#[allow(clippy::too_many_arguments)]
pub fn calibrate(
    mode: CalibrationMode,
    shots: &[PointCloud],
    bbox: &Aabb,
    model: &ReferenceModel,
    prepared: &PreparedModel,
    joints: &[f64],
    dh: Option<&DhTable>,
    threshold: OrThreshold,
) -> Result<CalibrationRun> {
    let Some(&theta1) = joints.first() else {
        return Err(Error::config("joints", "at least the first joint angle is required"));
    };
    let q = JointConfig::new(joints.to_vec());
    let base_to_tcp = match (mode, dh) {
        (CalibrationMode::EyeInHand, None) => {
            return Err(Error::config("dh", "eye-in-hand calibration needs a DH table"));
        }
        (_, Some(table)) => Some(forward_kinematics(table, &q).map_err(|e| Error::config("joints", e.to_string()))?),
        (CalibrationMode::EyeToHand, None) => None,
    };
    let mut warnings = Vec::new();
    if let Some(w) = joints.get(1).and_then(|&t2| model.check_theta2(t2)) {
        warnings.push(w);
    }
    let base_pose = filtered_base_pose_prepared(shots, bbox, prepared, theta1, threshold)?;
    let rejected = base_pose.shots.iter().filter(|s| !s.kept).count();
    if rejected > 0 {
        warnings.push(format!(
            "{rejected} of {} shots rejected by the overlap filter",
            shots.len()
        ));
    }
    let calibration = match mode {
        CalibrationMode::EyeInHand => {
            solve_single_shot_eye_in_hand(base_to_tcp.as_ref().expect("checked above"), &base_pose.cam_to_base)
        }
        CalibrationMode::EyeToHand => solve_eye_to_hand(&base_pose),
    };
    Ok(CalibrationRun {
        calibration,
        joints: joints.to_vec(),
        base_to_tcp: if mode == CalibrationMode::EyeInHand {
            base_to_tcp
        } else {
            None
        },
        base_pose,
        warnings,
    })
}

/// One entry of a shot directory's `shots.json`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShotSpec {
    pub file: PathBuf,
    /// Radians; the robot pose the shot was taken at.
    pub joints: Option<Vec<f64>>,
    /// `^Base_Cam T` when known directly.
    pub base_to_cam: Option<RigidTransform>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Shot {
    pub spec: ShotSpec,
    pub cloud: PointCloud,
}

pub const SHOTS_FILE: &str = "shots.json";

/// The shots in `dir`: the entries of its `shots.json` when present, otherwise every
/// `.ply` and `.xyz` file in name order.
pub fn load_shot_dir(dir: &Path, units: Option<Units>) -> Result<Vec<Shot>> {
    let listing = dir.join(SHOTS_FILE);
    let specs: Vec<ShotSpec> = if listing.is_file() {
        read_json(&listing)?
    } else {
        let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        let mut files: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.is_file()
                    && p.extension()
                        .and_then(|e| e.to_str())
                        .is_some_and(|e| e.eq_ignore_ascii_case("ply") || e.eq_ignore_ascii_case("xyz"))
            })
            .collect();
        files.sort();
        files
            .into_iter()
            .map(|p| ShotSpec {
                file: p.file_name().map(PathBuf::from).unwrap_or(p),
                ..Default::default()
            })
            .collect()
    };
    if specs.is_empty() {
        return Err(Error::config(dir.display().to_string(), "directory holds no shots"));
    }
    specs
        .into_iter()
        .map(|spec| {
            let path = if spec.file.is_relative() {
                dir.join(&spec.file)
            } else {
                spec.file.clone()
            };
            Ok(Shot {
                cloud: io::load_with(&path, units)?,
                spec,
            })
        })
        .collect()
}

/// `^Base_Cam T` for a shot under `calibration`.
pub fn camera_pose(calibration: &CalibrationResult, spec: &ShotSpec, dh: Option<&DhTable>) -> Result<RigidTransform> {
    if let Some(t) = spec.base_to_cam {
        return Ok(t);
    }
    match calibration.mode {
        CalibrationMode::EyeToHand => Ok(calibration.x_inverse),
        CalibrationMode::EyeInHand => {
            let field = format!("{} joints", spec.file.display());
            let joints = spec
                .joints
                .as_ref()
                .ok_or_else(|| Error::config(&field, "eye-in-hand shots need joint angles or base_to_cam"))?;
            let table = dh.ok_or_else(|| Error::config("dh", "eye-in-hand shots need a DH table"))?;
            let tcp = forward_kinematics(table, &JointConfig::new(joints.clone()))
                .map_err(|e| Error::config(field, e.to_string()))?;
            Ok(tcp * calibration.x)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRun {
    #[serde(rename = "static")]
    pub static_: TestReport,
    pub dynamic: TestReport,
    pub dynamic_icp: TestReport,
    /// Dynamic against static.
    pub offset: TestReport,
    /// ICP-refined dynamic against static.
    pub offset_icp: TestReport,
}

impl EvaluationRun {
    pub fn render(&self) -> String {
        [
            ("static", &self.static_),
            ("dynamic", &self.dynamic),
            ("dynamic + ICP", &self.dynamic_icp),
            ("offset (dynamic - static)", &self.offset),
            ("offset (dynamic + ICP - static)", &self.offset_icp),
        ]
        .iter()
        .map(|(title, r)| format!("{title}\n{}", r.render()))
        .collect::<Vec<_>>()
        .join("\n")
    }
}

/// Static shots are fitted as captured, dynamic ones after moving them into the base
/// frame. `crop` is applied to every shot in its own camera frame.
pub fn evaluate(
    shape: Shape,
    static_shots: &[PointCloud],
    dynamic_shots: &[(PointCloud, RigidTransform)],
    crop: Option<&Aabb>,
    params: &MatchParams,
) -> Result<EvaluationRun> {
    let cut = |pc: &PointCloud| crop.map_or_else(|| pc.clone(), |b| basecal_core::cloud::crop(pc, b));
    let static_shots: Vec<PointCloud> = static_shots.iter().map(cut).collect();
    let dynamic_shots: Vec<(PointCloud, RigidTransform)> = dynamic_shots.iter().map(|(pc, t)| (cut(pc), *t)).collect();
    let static_ = static_test(&static_shots, shape)?;
    let dynamic = dynamic_test_with(&dynamic_shots, shape, false, params)?;
    let dynamic_icp = dynamic_test_with(&dynamic_shots, shape, true, params)?;
    Ok(EvaluationRun {
        offset: offset_report(&dynamic, &static_)?,
        offset_icp: offset_report(&dynamic_icp, &static_)?,
        static_,
        dynamic,
        dynamic_icp,
    })
}
