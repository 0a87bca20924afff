//! Forward kinematics and hand-eye solvers.
//!
//! Naming follows `^A_B T`: `base_to_tcp` is `^Base_TCP T` (TCP coordinates into the
//! base frame), `cam_to_base` is `^Cam_Base T`. The single-shot identity is
//! `^Base_TCP T · ^TCP_Cam T · ^Cam_Base T = I`.

use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, Matrix4, Quaternion, SymmetricEigen, UnitQuaternion};
use serde::{Deserialize, Serialize};

use crate::basepose::BasePoseEstimate;
use crate::error::{Error, Result};
use crate::geometry::{axis_angle_matrix, rot_x_matrix, rot_z_matrix, Mat3, RigidTransform, Vec3};
use crate::metrics::rre;

/// Rotation axes closer than this (radians, either sign) count as parallel.
pub const MIN_AXIS_SEPARATION: f64 = core::f64::consts::PI / 180.0;
/// Largest accepted condition number of the translation system.
pub const MAX_CONDITION: f64 = 1e8;
/// Linearized refinement steps after the closed-form rotation.
const REFINE_STEPS: usize = 3;
/// Relative motions with a smaller rotation angle (radians) carry no axis.
const MIN_MOTION_ANGLE: f64 = 1e-9;

/// One standard Denavit–Hartenberg row.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DhRow {
    pub a: f64,
    pub alpha: f64,
    pub d: f64,
    #[serde(default)]
    pub theta_offset: f64,
}

impl DhRow {
    /// `Rz(θ) · Tz(d) · Tx(a) · Rx(α)` with `θ = q + theta_offset`.
    pub fn transform(&self, q: f64) -> RigidTransform {
        let theta = q + self.theta_offset;
        let rz = rot_z_matrix(theta);
        RigidTransform::new(
            rz * rot_x_matrix(self.alpha),
            rz * Vec3::new(self.a, 0.0, 0.0) + Vec3::new(0.0, 0.0, self.d),
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DhTable {
    pub rows: Vec<DhRow>,
    /// Fixed flange→tool transform appended after the last joint; the TCP is the flange
    /// when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool: Option<RigidTransform>,
}

impl DhTable {
    pub fn new(rows: Vec<DhRow>) -> Result<Self> {
        let t = Self { rows, tool: None };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows.is_empty() {
            return Err(Error::EmptyInput);
        }
        let finite = self
            .rows
            .iter()
            .all(|r| [r.a, r.alpha, r.d, r.theta_offset].iter().all(|v| v.is_finite()));
        if !finite {
            return Err(Error::InvalidParameter {
                name: "rows",
                reason: "DH entries must be finite".into(),
            });
        }
        Ok(())
    }

    /// Sample nominal table for a UR5e arm (meters, radians). Edit for a real robot.
    pub fn ur5e() -> Self {
        use core::f64::consts::FRAC_PI_2;
        let rows = [
            (0.0, FRAC_PI_2, 0.1625),
            (-0.425, 0.0, 0.0),
            (-0.3922, 0.0, 0.0),
            (0.0, FRAC_PI_2, 0.1333),
            (0.0, -FRAC_PI_2, 0.0997),
            (0.0, 0.0, 0.0996),
        ]
        .into_iter()
        .map(|(a, alpha, d)| DhRow {
            a,
            alpha,
            d,
            theta_offset: 0.0,
        })
        .collect();
        Self { rows, tool: None }
    }
}

/// Joint angles in radians, one per DH row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JointConfig {
    pub angles: Vec<f64>,
}

impl JointConfig {
    pub fn new(angles: Vec<f64>) -> Self {
        Self { angles }
    }
}

/// `^Base_TCP T` as the product of the per-joint DH transforms (then the tool, if any).
pub fn forward_kinematics(table: &DhTable, q: &JointConfig) -> Result<RigidTransform> {
    if q.angles.len() != table.rows.len() {
        return Err(Error::LengthMismatch {
            expected: table.rows.len(),
            got: q.angles.len(),
        });
    }
    let flange = table
        .rows
        .iter()
        .zip(&q.angles)
        .fold(RigidTransform::identity(), |acc, (row, &qi)| acc * row.transform(qi));
    Ok(match &table.tool {
        Some(tool) => flange * *tool,
        None => flange,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CalibrationMode {
    /// Camera on the arm; `x` is `^TCP_Cam T`.
    EyeInHand,
    /// Camera fixed in the cell; `x` is `^Cam_Base T` and `x_inverse` the camera pose
    /// `^Base_Cam T`.
    EyeToHand,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub mode: CalibrationMode,
    pub x: RigidTransform,
    pub x_inverse: RigidTransform,
    /// Degrees.
    pub residual_rotation: f64,
    /// Meters.
    pub residual_translation: f64,
    /// FNV-1a hash of the numeric inputs, for matching results to their inputs.
    pub inputs_digest: String,
}

impl CalibrationResult {
    fn new(mode: CalibrationMode, x: RigidTransform, residual: (f64, f64), digest: u64) -> Self {
        Self {
            mode,
            x,
            x_inverse: x.inverse(),
            residual_rotation: residual.0,
            residual_translation: residual.1,
            inputs_digest: alloc::format!("{digest:016x}"),
        }
    }
}

/// Streaming 64-bit FNV-1a over the little-endian bytes of `f64` values.
#[derive(Clone, Copy, Debug)]
pub struct Digest(u64);

impl Default for Digest {
    fn default() -> Self {
        Self(0xcbf2_9ce4_8422_2325)
    }
}

impl Digest {
    pub fn bytes(mut self, bytes: &[u8]) -> Self {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0100_0000_01b3);
        }
        self
    }

    pub fn transform(self, t: &RigidTransform) -> Self {
        let mut d = self;
        for v in t.rotation.iter().chain(t.translation.iter()) {
            d = d.bytes(&v.to_le_bytes());
        }
        d
    }

    pub fn finish(self) -> u64 {
        self.0
    }
}

/// Rotation (degrees) and translation (m) of `t` away from the identity.
fn deviation_from_identity(t: &RigidTransform) -> (f64, f64) {
    (rre(&t.rotation, &Mat3::identity()), t.translation.norm())
}

/// Eye-in-hand from one robot pose and one base observation:
/// `X = (^Base_TCP T)⁻¹ · (^Cam_Base T)⁻¹`. The residual is how far `A·X·B` is from `I`.
pub fn solve_single_shot_eye_in_hand(base_to_tcp: &RigidTransform, cam_to_base: &RigidTransform) -> CalibrationResult {
    let x = base_to_tcp.inverse() * cam_to_base.inverse();
    let residual = deviation_from_identity(&(*base_to_tcp * x * *cam_to_base));
    let digest = Digest::default()
        .bytes(b"eye-in-hand")
        .transform(base_to_tcp)
        .transform(cam_to_base)
        .finish();
    CalibrationResult::new(CalibrationMode::EyeInHand, x, residual, digest)
}

/// Eye-to-hand: the base pose estimate already is the answer.
pub fn solve_eye_to_hand(base_pose: &BasePoseEstimate) -> CalibrationResult {
    let x = base_pose.cam_to_base;
    let digest = Digest::default()
        .bytes(b"eye-to-hand")
        .transform(&x)
        .bytes(&base_pose.theta1.to_le_bytes())
        .finish();
    CalibrationResult::new(CalibrationMode::EyeToHand, x, (0.0, 0.0), digest)
}

/// One robot motion and the matching observed motion, related by `A·X = X·B`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionPair {
    pub a: RigidTransform,
    pub b: RigidTransform,
}

impl MotionPair {
    /// Pair for an eye-in-hand camera watching a static target from two arm poses:
    /// `A = (^Base_TCP T₂)⁻¹ · ^Base_TCP T₁`, `B = ^Cam_Obj T₂ · (^Cam_Obj T₁)⁻¹`.
    pub fn eye_in_hand(base_to_tcp: [&RigidTransform; 2], cam_to_target: [&RigidTransform; 2]) -> Self {
        Self {
            a: base_to_tcp[1].inverse() * *base_to_tcp[0],
            b: *cam_to_target[1] * cam_to_target[0].inverse(),
        }
    }
}

fn rotation_vector(r: &Mat3) -> Vec3 {
    nalgebra::Rotation3::from_matrix_unchecked(*r).scaled_axis()
}

/// Rotation `R` maximizing `Σ αᵢ·(R βᵢ)` for `s = Σ βᵢ αᵢᵀ`, via the dominant eigenvector
/// of Horn's symmetric 4×4 matrix.
fn horn_rotation(s: &Mat3) -> Mat3 {
    let (xx, xy, xz) = (s[(0, 0)], s[(0, 1)], s[(0, 2)]);
    let (yx, yy, yz) = (s[(1, 0)], s[(1, 1)], s[(1, 2)]);
    let (zx, zy, zz) = (s[(2, 0)], s[(2, 1)], s[(2, 2)]);
    #[rustfmt::skip]
    let n = Matrix4::new(
        xx + yy + zz, yz - zy, zx - xz, xy - yx,
        yz - zy, xx - yy - zz, xy + yx, zx + xz,
        zx - xz, xy + yx, -xx + yy - zz, yz + zy,
        xy - yx, zx + xz, yz + zy, -xx - yy + zz,
    );
    let eig = SymmetricEigen::new(n);
    let v = eig.eigenvectors.column(eig.eigenvalues.imax());
    let q = UnitQuaternion::from_quaternion(Quaternion::new(v[0], v[1], v[2], v[3]));
    q.to_rotation_matrix().into_inner()
}

/// Classical multi-motion `AX = XB`.
///
/// Rotation: a pair's rotation axes satisfy `axis(A) = R_X · axis(B)`, so `R_X` is the
/// least-squares rotation taking the B rotation vectors onto the A rotation vectors.
/// Translation: least squares on the stacked `(R_A − I)·t_X = R_X·t_B − t_A`.
pub fn solve_ax_xb(pairs: &[MotionPair]) -> Result<CalibrationResult> {
    if pairs.len() < 2 {
        return Err(Error::InsufficientMotion);
    }
    let axes: Vec<(Vec3, Vec3)> = pairs
        .iter()
        .map(|p| (rotation_vector(&p.a.rotation), rotation_vector(&p.b.rotation)))
        .filter(|(a, _)| a.norm() > MIN_MOTION_ANGLE)
        .collect();
    let spread = axes.iter().enumerate().any(|(i, (a, _))| {
        axes[i + 1..].iter().any(|(b, _)| {
            let c = (a.dot(b) / (a.norm() * b.norm())).abs().min(1.0);
            libm::acos(c) > MIN_AXIS_SEPARATION
        })
    });
    if !spread {
        return Err(Error::InsufficientMotion);
    }

    let mut s = Mat3::zeros();
    for (alpha, beta) in &axes {
        s += beta * alpha.transpose();
    }
    let mut r_x = horn_rotation(&s);
    // Eigen-solver accuracy is limited by the eigenvalue gap; a few linearized
    // least-squares steps bring the residual down to rounding level.
    for _ in 0..REFINE_STEPS {
        let (mut jtj, mut jtr) = (Mat3::zeros(), Vec3::zeros());
        for (alpha, beta) in &axes {
            let rb = r_x * beta;
            let j = -rb.cross_matrix();
            jtj += j.transpose() * j;
            jtr += j.transpose() * (alpha - rb);
        }
        let Some(omega) = jtj.cholesky().map(|c| c.solve(&jtr)) else {
            break;
        };
        r_x = axis_angle_matrix(&omega, omega.norm()) * r_x;
    }

    let n = pairs.len();
    let mut c = DMatrix::<f64>::zeros(3 * n, 3);
    let mut rhs = DVector::<f64>::zeros(3 * n);
    for (k, p) in pairs.iter().enumerate() {
        let block = p.a.rotation - Mat3::identity();
        let v = r_x * p.b.translation - p.a.translation;
        for i in 0..3 {
            for j in 0..3 {
                c[(3 * k + i, j)] = block[(i, j)];
            }
            rhs[3 * k + i] = v[i];
        }
    }
    // Householder QR; the 3×3 factor carries the system's singular values.
    let qr = c.qr();
    let r = qr.r();
    let r3 = Mat3::from_fn(|i, j| r[(i, j)]);
    let sv = r3.singular_values();
    let cond = if sv.min() > 0.0 {
        sv.max() / sv.min()
    } else {
        f64::INFINITY
    };
    if !(cond <= MAX_CONDITION) {
        return Err(Error::IllConditioned(cond));
    }
    let qtb = qr.q().transpose() * rhs;
    let sol = r3
        .solve_upper_triangular(&Vec3::new(qtb[0], qtb[1], qtb[2]))
        .ok_or(Error::IllConditioned(cond))?;
    let x = RigidTransform::new(r_x, Vec3::new(sol[0], sol[1], sol[2]));

    let (mut rot, mut trans) = (0.0, 0.0);
    let mut digest = Digest::default().bytes(b"ax-xb");
    for p in pairs {
        let lhs = p.a * x;
        let rhs = x * p.b;
        rot += rre(&lhs.rotation, &rhs.rotation) / n as f64;
        trans += (lhs.translation - rhs.translation).norm() / n as f64;
        digest = digest.transform(&p.a).transform(&p.b);
    }
    Ok(CalibrationResult::new(
        CalibrationMode::EyeInHand,
        x,
        (rot, trans),
        digest.finish(),
    ))
}
