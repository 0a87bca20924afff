//! Rigid-body algebra on SE(3) and SO(3).
//!
//! A [`RigidTransform`] `T = [R | t]` maps a point `p` to `R·p + t`. Frames follow the
//! `^A_B T` convention: the transform maps coordinates expressed in frame `B` into frame
//! `A`, so `^A_B T · ^B_C T = ^A_C T`.

use core::ops::Mul;

use nalgebra::{Matrix3, Matrix4, Rotation3, SymmetricEigen, UnitQuaternion, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Threshold on `|cos beta|` below which Euler extraction is declared gimbal-locked.
pub const GIMBAL_LOCK_COS: f64 = 1e-8;

/// An element of SE(3): rotation (orthonormal, det +1) and translation in meters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TransformRepr", into = "TransformRepr")]
pub struct RigidTransform {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn new(rotation: Mat3, translation: Vec3) -> Self {
        Self { rotation, translation }
    }

    pub fn identity() -> Self {
        Self::new(Mat3::identity(), Vec3::zeros())
    }

    pub fn from_rotation(rotation: Mat3) -> Self {
        Self::new(rotation, Vec3::zeros())
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self::new(Mat3::identity(), translation)
    }

    /// `self · other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform::new(
            self.rotation * other.rotation,
            self.rotation * other.translation + self.translation,
        )
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform::new(rt, -(rt * self.translation))
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Takes the upper 3×4 block; the bottom row is ignored.
    pub fn from_homogeneous(m: &Matrix4<f64>) -> RigidTransform {
        RigidTransform::new(
            m.fixed_view::<3, 3>(0, 0).into_owned(),
            m.fixed_view::<3, 1>(0, 3).into_owned(),
        )
    }

    /// Frobenius norm of `RᵀR − I`.
    pub fn orthonormality_error(&self) -> f64 {
        (self.rotation.transpose() * self.rotation - Mat3::identity()).norm()
    }

    pub fn is_rigid(&self, tol: f64) -> bool {
        self.rotation
            .iter()
            .chain(self.translation.iter())
            .all(|v| v.is_finite())
            && self.orthonormality_error() < tol
            && libm::fabs(self.rotation.determinant() - 1.0) < tol
    }

    /// Geodesic rotation angle of this transform, radians in `[0, π]`.
    pub fn angle(&self) -> f64 {
        rotation_angle(&self.rotation)
    }

    /// Largest absolute entry-wise difference between the homogeneous matrices.
    pub fn max_abs_diff(&self, other: &RigidTransform) -> f64 {
        self.rotation
            .iter()
            .zip(other.rotation.iter())
            .chain(self.translation.iter().zip(other.translation.iter()))
            .map(|(a, b)| libm::fabs(a - b))
            .fold(0.0, f64::max)
    }
}

impl Mul for RigidTransform {
    type Output = RigidTransform;
    fn mul(self, rhs: RigidTransform) -> RigidTransform {
        self.compose(&rhs)
    }
}

impl Mul<&RigidTransform> for &RigidTransform {
    type Output = RigidTransform;
    fn mul(self, rhs: &RigidTransform) -> RigidTransform {
        self.compose(rhs)
    }
}

/// JSON wire form: `{"R": [[r00, r01, r02], [..], [..]], "t": [x, y, z]}`, row-major, meters.
#[derive(Serialize, Deserialize)]
struct TransformRepr {
    #[serde(rename = "R")]
    r: [[f64; 3]; 3],
    t: [f64; 3],
}

/// Deserialized matrices must be rigid to this tolerance.
const WIRE_RIGIDITY_TOL: f64 = 1e-6;

impl TryFrom<TransformRepr> for RigidTransform {
    type Error = Error;
    fn try_from(w: TransformRepr) -> Result<Self> {
        let rotation = Mat3::from_fn(|i, j| w.r[i][j]);
        let t = RigidTransform::new(rotation, Vec3::new(w.t[0], w.t[1], w.t[2]));
        if !t.is_rigid(WIRE_RIGIDITY_TOL) {
            return Err(Error::InvalidTransform(alloc::format!(
                "rotation is not orthonormal with det 1 (orthonormality error {:e})",
                t.orthonormality_error()
            )));
        }
        Ok(t)
    }
}

impl From<RigidTransform> for TransformRepr {
    fn from(t: RigidTransform) -> Self {
        let m = &t.rotation;
        TransformRepr {
            r: [
                [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
                [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
                [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
            ],
            t: [t.translation.x, t.translation.y, t.translation.z],
        }
    }
}

pub fn compose(a: &RigidTransform, b: &RigidTransform) -> RigidTransform {
    a.compose(b)
}

pub fn inverse(t: &RigidTransform) -> RigidTransform {
    t.inverse()
}

pub fn rot_x(theta: f64) -> RigidTransform {
    RigidTransform::from_rotation(rot_x_matrix(theta))
}

pub fn rot_y(theta: f64) -> RigidTransform {
    RigidTransform::from_rotation(rot_y_matrix(theta))
}

/// Right-handed rotation about +Z.
pub fn rot_z(theta: f64) -> RigidTransform {
    RigidTransform::from_rotation(rot_z_matrix(theta))
}

pub fn rot_x_matrix(theta: f64) -> Mat3 {
    let (s, c) = libm::sincos(theta);
    Mat3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

pub fn rot_y_matrix(theta: f64) -> Mat3 {
    let (s, c) = libm::sincos(theta);
    Mat3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

pub fn rot_z_matrix(theta: f64) -> Mat3 {
    let (s, c) = libm::sincos(theta);
    Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Rodrigues rotation about a (not necessarily unit) axis. A zero axis yields identity.
pub fn axis_angle_matrix(axis: &Vec3, angle: f64) -> Mat3 {
    let n = axis.norm();
    if n == 0.0 || angle == 0.0 {
        return Mat3::identity();
    }
    let k = axis / n;
    let kx = k.cross_matrix();
    let (s, c) = libm::sincos(angle);
    Mat3::identity() + kx * s + kx * kx * (1.0 - c)
}

/// Geodesic angle of a rotation matrix (radians), with the arccos argument clamped.
pub fn rotation_angle(r: &Mat3) -> f64 {
    let c = ((r.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    libm::acos(c)
}

/// Angle of `aᵀ·b`, radians.
pub fn angle_between(a: &Mat3, b: &Mat3) -> f64 {
    rotation_angle(&(a.transpose() * b))
}

/// Z-Y-X Euler angles: `R = Rz(alpha) · Ry(beta) · Rx(gamma)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EulerAngles {
    /// Rotation about Z, radians.
    pub alpha: f64,
    /// Rotation about Y, radians.
    pub beta: f64,
    /// Rotation about X, radians.
    pub gamma: f64,
    /// Set when `|cos beta|` fell below [`GIMBAL_LOCK_COS`]; `alpha` then carries the
    /// merged `alpha ± gamma` and `gamma` is zero.
    #[serde(default)]
    pub gimbal_lock: bool,
}

impl EulerAngles {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Self {
        Self {
            alpha,
            beta,
            gamma,
            gimbal_lock: false,
        }
    }

    /// The `(beta, alpha, gamma)` ordering used for the Euler-vector error.
    pub fn as_vector(&self) -> Vec3 {
        Vec3::new(self.beta, self.alpha, self.gamma)
    }
}

/// Which formula produces `gamma`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EulerFormula {
    /// `gamma = atan2(R32 / cos beta, R33 / cos beta)`, the exact inverse of [`from_euler`].
    #[default]
    Corrected,
    /// `gamma = atan2(R21 / cos beta, R33 / cos beta)`, kept for reproducing published
    /// Euler-error numbers. Not an inverse of [`from_euler`].
    Literal,
}

pub fn to_euler(r: &Mat3) -> EulerAngles {
    to_euler_with(r, EulerFormula::Corrected)
}

pub fn to_euler_with(r: &Mat3, formula: EulerFormula) -> EulerAngles {
    // 1-based R_{i,j} is r[(i-1, j-1)].
    let cos_beta = libm::sqrt(r[(0, 0)] * r[(0, 0)] + r[(1, 0)] * r[(1, 0)]);
    let beta = libm::atan2(-r[(2, 0)], cos_beta);
    if cos_beta < GIMBAL_LOCK_COS {
        // R = Rz(alpha ∓ gamma)·Ry(±π/2); only the combination is observable.
        let alpha = libm::atan2(-r[(0, 1)], r[(1, 1)]);
        return EulerAngles {
            alpha,
            beta,
            gamma: 0.0,
            gimbal_lock: true,
        };
    }
    let alpha = libm::atan2(r[(1, 0)] / cos_beta, r[(0, 0)] / cos_beta);
    let gamma_num = match formula {
        EulerFormula::Corrected => r[(2, 1)],
        EulerFormula::Literal => r[(1, 0)],
    };
    let gamma = libm::atan2(gamma_num / cos_beta, r[(2, 2)] / cos_beta);
    EulerAngles::new(alpha, beta, gamma)
}

pub fn from_euler(e: &EulerAngles) -> Mat3 {
    rot_z_matrix(e.alpha) * rot_y_matrix(e.beta) * rot_x_matrix(e.gamma)
}

/// Nearest rotation in Frobenius norm (polar factor `U·Vᵀ` with a determinant fix).
pub fn nearest_rotation(m: &Mat3) -> Mat3 {
    let svd = m.svd(true, true);
    let u = svd.u.expect("svd computed with u");
    let v_t = svd.v_t.expect("svd computed with v_t");
    let mut d = Mat3::identity();
    if (u * v_t).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    u * d * v_t
}

/// Divides each row by its Euclidean norm. Does not produce a rotation in general.
pub fn row_normalize(m: &Mat3) -> Mat3 {
    let mut out = *m;
    for i in 0..3 {
        let n = m.row(i).norm();
        if n > 0.0 {
            out.set_row(i, &(m.row(i) / n));
        }
    }
    out
}

pub fn quaternion_from_matrix(r: &Mat3) -> UnitQuaternion<f64> {
    UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*r))
}

pub fn matrix_from_quaternion(q: &UnitQuaternion<f64>) -> Mat3 {
    q.to_rotation_matrix().into_inner()
}

/// Weighted chordal mean of rotations.
///
/// The dominant eigenvector of `Σ wᵢ qᵢ qᵢᵀ` maximizes `Σ wᵢ (qᵢ·q)²`, which is the
/// minimizer of `Σ wᵢ ‖Rᵢ − R‖²_F`. The outer product makes the result independent of
/// each quaternion's sign.
pub fn average_rotations(rs: &[Mat3], weights: &[f64]) -> Result<Mat3> {
    if rs.is_empty() {
        return Err(Error::EmptyInput);
    }
    if weights.len() != rs.len() {
        return Err(Error::LengthMismatch {
            expected: rs.len(),
            got: weights.len(),
        });
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::InvalidParameter {
            name: "weights",
            reason: "weights must be finite and non-negative".into(),
        });
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "weights",
            reason: "weights must have a positive sum".into(),
        });
    }
    let mut acc = Matrix4::<f64>::zeros();
    for (r, w) in rs.iter().zip(weights) {
        let q = quaternion_from_matrix(&nearest_rotation(r));
        let v = Vector4::new(q.w, q.i, q.j, q.k);
        acc += v * v.transpose() * (w / total);
    }
    let eig = SymmetricEigen::new(acc);
    let best = eig.eigenvalues.imax();
    let v = eig.eigenvectors.column(best);
    let q = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(v[0], v[1], v[2], v[3]));
    Ok(matrix_from_quaternion(&q))
}

/// Unweighted convenience wrapper around [`average_rotations`].
pub fn mean_rotation(rs: &[Mat3]) -> Result<Mat3> {
    let w = alloc::vec![1.0; rs.len()];
    average_rotations(rs, &w)
}
