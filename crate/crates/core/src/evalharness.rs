//! Plane and sphere fits, and the static/dynamic reconstruction tests built on them.
//!
//! A static test fits repeated scans from one fixed pose and measures imaging noise. A
//! dynamic test moves scans from several poses into the base frame with the calibrated
//! transforms before fitting, so calibration error shows up as a spread of the fitted
//! parameters. The offset between the two isolates the calibration's contribution.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use nalgebra::{Matrix4, SymmetricEigen, Vector4};
use serde::{Deserialize, Serialize};

use crate::cloud::{transform, PointCloud};
use crate::error::{Error, Result};
use crate::geometry::{Mat3, RigidTransform, Vec3};
use crate::registration::{icp, MatchParams};

/// Smallest accepted eigenvalue ratio before a point set counts as degenerate.
const DEGENERACY_RATIO: f64 = 1e-12;
/// Gauss–Newton steps after the algebraic sphere fit.
pub const SPHERE_REFINE_STEPS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlaneFit {
    /// Unit normal, in the `z ≥ 0` half-space.
    #[serde(with = "crate::synth::vec3_serde")]
    pub normal: Vec3,
    /// The plane is `normal · x = offset` (m).
    pub offset: f64,
    /// RMS orthogonal residual (m).
    pub rms: f64,
    /// Angle between the normal and +Z, degrees in `[0, 90]`.
    pub angle_to_z: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SphereFit {
    #[serde(with = "crate::synth::vec3_serde")]
    pub center: Vec3,
    pub radius: f64,
    /// RMS radial residual (m).
    pub rms: f64,
}

fn sorted_eigen(points: &PointCloud) -> Option<(Vec3, Vec3, Mat3)> {
    let (c, cov) = points.covariance()?;
    let eig = SymmetricEigen::new(cov);
    let mut order = [0, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = Vec3::new(
        eig.eigenvalues[order[0]],
        eig.eigenvalues[order[1]],
        eig.eigenvalues[order[2]],
    );
    let vectors = Mat3::from_columns(&order.map(|k| eig.eigenvectors.column(k).into_owned()));
    Some((c, values, vectors))
}

/// Total-least-squares plane.
pub fn fit_plane(points: &PointCloud) -> Result<PlaneFit> {
    if points.len() < 3 {
        return Err(Error::TooFewPoints {
            needed: 3,
            got: points.len(),
        });
    }
    let (c, values, vectors) = sorted_eigen(points).ok_or(Error::EmptyInput)?;
    if !(values[1] > DEGENERACY_RATIO * values[2]) {
        return Err(Error::DegenerateGeometry("points are collinear"));
    }
    let mut n: Vec3 = vectors.column(0).normalize();
    if n.z < 0.0 || (n.z == 0.0 && (n.y < 0.0 || (n.y == 0.0 && n.x < 0.0))) {
        n = -n;
    }
    let ss: f64 = points
        .iter()
        .map(|p| {
            let d = (p - c).dot(&n);
            d * d
        })
        .sum();
    Ok(PlaneFit {
        normal: n,
        offset: n.dot(&c),
        rms: libm::sqrt(ss / points.len() as f64),
        angle_to_z: libm::acos(n.z.clamp(-1.0, 1.0)).to_degrees(),
    })
}

/// Algebraic sphere fit refined by Gauss–Newton on the radial residuals.
pub fn fit_sphere(points: &PointCloud) -> Result<SphereFit> {
    if points.len() < 4 {
        return Err(Error::TooFewPoints {
            needed: 4,
            got: points.len(),
        });
    }
    let (centroid, values, _) = sorted_eigen(points).ok_or(Error::EmptyInput)?;
    if !(values[0] > DEGENERACY_RATIO * values[2]) {
        return Err(Error::DegenerateGeometry("points are coplanar"));
    }
    // `|x|² = 2c·x + ρ` in centred coordinates via the normal equations.
    let mut ata = Matrix4::<f64>::zeros();
    let mut atb = Vector4::<f64>::zeros();
    for p in points.iter() {
        let q = p - centroid;
        let row = Vector4::new(2.0 * q.x, 2.0 * q.y, 2.0 * q.z, 1.0);
        ata += row * row.transpose();
        atb += row * q.norm_squared();
    }
    let sol = ata
        .cholesky()
        .map(|ch| ch.solve(&atb))
        .ok_or(Error::DegenerateGeometry("points are coplanar"))?;
    let mut center = Vec3::new(sol[0], sol[1], sol[2]);
    let mut radius = libm::sqrt(sol[3] + center.norm_squared());

    for _ in 0..SPHERE_REFINE_STEPS {
        // Residual rᵢ = |qᵢ − c| − r, Jacobian row (−uᵢᵀ, −1).
        let mut jtj = Matrix4::<f64>::zeros();
        let mut jtr = Vector4::<f64>::zeros();
        for p in points.iter() {
            let d = p - centroid - center;
            let len = d.norm();
            if len == 0.0 {
                continue;
            }
            let u = d / len;
            let j = Vector4::new(-u.x, -u.y, -u.z, -1.0);
            jtj += j * j.transpose();
            jtr += j * (len - radius);
        }
        let Some(step) = jtj.cholesky().map(|ch| ch.solve(&(-jtr))) else {
            break;
        };
        center += Vec3::new(step[0], step[1], step[2]);
        radius += step[3];
        if step.norm() <= 1e-15 * (1.0 + radius) {
            break;
        }
    }
    let ss: f64 = points
        .iter()
        .map(|p| {
            let r = (p - centroid - center).norm() - radius;
            r * r
        })
        .sum();
    Ok(SphereFit {
        center: center + centroid,
        radius,
        rms: libm::sqrt(ss / points.len() as f64),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Shape {
    Plane,
    Sphere,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestKind {
    Static,
    Dynamic,
    DynamicIcp,
    Offset,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case")]
pub enum Fit {
    Plane(PlaneFit),
    Sphere(SphereFit),
}

/// Range of values, sample standard deviation, median and mean.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub range: f64,
    pub std_dev: f64,
    pub median: f64,
    pub mean: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput);
        }
        let n = values.len() as f64;
        // Shifted by the first value, so identical inputs give exactly zero spread.
        let k = values[0];
        let (sum, sum_sq) = values
            .iter()
            .fold((0.0, 0.0), |(s, q), v| (s + (v - k), q + (v - k) * (v - k)));
        let mean = k + sum / n;
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let m = sorted.len() / 2;
        let median = if sorted.len() % 2 == 1 {
            sorted[m]
        } else {
            (sorted[m - 1] + sorted[m]) / 2.0
        };
        let var = if values.len() > 1 {
            ((sum_sq - sum * sum / n) / (n - 1.0)).max(0.0)
        } else {
            0.0
        };
        Ok(Self {
            range: sorted[sorted.len() - 1] - sorted[0],
            std_dev: libm::sqrt(var),
            median,
            mean,
        })
    }

    fn abs_diff(&self, other: &Stats) -> Stats {
        Stats {
            range: (self.range - other.range).abs(),
            std_dev: (self.std_dev - other.std_dev).abs(),
            median: (self.median - other.median).abs(),
            mean: (self.mean - other.mean).abs(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub name: String,
    /// `deg` or `m`.
    pub unit: String,
    /// Per-shot values; empty for offset reports.
    pub values: Vec<f64>,
    pub stats: Stats,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub shape: Shape,
    pub kind: TestKind,
    /// Per-shot fits; empty for offset reports.
    pub fits: Vec<Fit>,
    pub metrics: Vec<MetricSummary>,
}

fn metric(name: &str, unit: &str, values: Vec<f64>) -> Result<MetricSummary> {
    Ok(MetricSummary {
        name: name.into(),
        unit: unit.into(),
        stats: Stats::of(&values)?,
        values,
    })
}

fn report(shape: Shape, kind: TestKind, clouds: &[PointCloud]) -> Result<TestReport> {
    if clouds.len() < 2 {
        return Err(Error::TooFewPoints {
            needed: 2,
            got: clouds.len(),
        });
    }
    let (fits, metrics) = match shape {
        Shape::Plane => {
            let fits = clouds.iter().map(fit_plane).collect::<Result<Vec<_>>>()?;
            let metrics = alloc::vec![
                metric("angle", "deg", fits.iter().map(|f| f.angle_to_z).collect())?,
                metric("rms", "m", fits.iter().map(|f| f.rms).collect())?,
            ];
            (fits.into_iter().map(Fit::Plane).collect(), metrics)
        }
        Shape::Sphere => {
            let fits = clouds.iter().map(fit_sphere).collect::<Result<Vec<_>>>()?;
            let mean_center = fits.iter().map(|f| f.center).sum::<Vec3>() / fits.len() as f64;
            let metrics = alloc::vec![
                metric(
                    "dc",
                    "m",
                    fits.iter().map(|f| (f.center - mean_center).norm()).collect()
                )?,
                metric("radius", "m", fits.iter().map(|f| f.radius).collect())?,
                metric("rms", "m", fits.iter().map(|f| f.rms).collect())?,
            ];
            (fits.into_iter().map(Fit::Sphere).collect(), metrics)
        }
    };
    Ok(TestReport {
        shape,
        kind,
        fits,
        metrics,
    })
}

/// Fits every shot as captured. Sphere reports include DC, each centre's distance to the
/// mean centre.
pub fn static_test(shots: &[PointCloud], shape: Shape) -> Result<TestReport> {
    report(shape, TestKind::Static, shots)
}

/// Moves each shot into the base frame with its `^Base_Cam T` and fits it there. With
/// `refine_icp` every moved shot after the first is first aligned to the first one by ICP,
/// which gives the reference ("ground truth") variant of the test.
pub fn dynamic_test(shots: &[(PointCloud, RigidTransform)], shape: Shape, refine_icp: bool) -> Result<TestReport> {
    dynamic_test_with(shots, shape, refine_icp, &MatchParams::default())
}

pub fn dynamic_test_with(
    shots: &[(PointCloud, RigidTransform)],
    shape: Shape,
    refine_icp: bool,
    params: &MatchParams,
) -> Result<TestReport> {
    let mut moved: Vec<PointCloud> = shots.iter().map(|(pc, t)| transform(pc, t)).collect();
    let kind = if refine_icp {
        TestKind::DynamicIcp
    } else {
        TestKind::Dynamic
    };
    if refine_icp && moved.len() > 1 {
        let (first, rest) = moved.split_at_mut(1);
        for pc in rest {
            let r = icp(pc, &first[0], &RigidTransform::identity(), params)?;
            *pc = transform(pc, &r.transform);
        }
    }
    report(shape, kind, &moved)
}

/// `|dynamic − static|` for every statistic of every metric.
pub fn offset_report(dynamic: &TestReport, static_: &TestReport) -> Result<TestReport> {
    let same = dynamic.shape == static_.shape
        && dynamic.metrics.len() == static_.metrics.len()
        && dynamic
            .metrics
            .iter()
            .zip(&static_.metrics)
            .all(|(a, b)| a.name == b.name && a.unit == b.unit);
    if !same {
        return Err(Error::ShapeMismatch);
    }
    Ok(TestReport {
        shape: dynamic.shape,
        kind: TestKind::Offset,
        fits: Vec::new(),
        metrics: dynamic
            .metrics
            .iter()
            .zip(&static_.metrics)
            .map(|(d, s)| MetricSummary {
                name: d.name.clone(),
                unit: d.unit.clone(),
                values: Vec::new(),
                stats: d.stats.abs_diff(&s.stats),
            })
            .collect(),
    })
}

impl TestReport {
    /// Plain-text table with one row per metric and RV/SD/Median/Mean columns. Lengths
    /// print in millimetres.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<8} {:>6} {:>10} {:>10} {:>10} {:>10}",
            "metric", "unit", "RV", "SD", "Median", "Mean"
        );
        for m in &self.metrics {
            let (scale, unit) = if m.unit == "m" {
                (1000.0, "mm")
            } else {
                (1.0, m.unit.as_str())
            };
            let s = &m.stats;
            let _ = writeln!(
                out,
                "{:<8} {:>6} {:>10.4} {:>10.4} {:>10.4} {:>10.4}",
                m.name,
                unit,
                s.range * scale,
                s.std_dev * scale,
                s.median * scale,
                s.mean * scale
            );
        }
        out
    }
}
