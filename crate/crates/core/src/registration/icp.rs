use alloc::vec::Vec;

use super::grid::Lookup;
use super::procrustes::fit_rigid;
use super::{MatchParams, PreparedReference, RegistrationResult};
use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::geometry::{RigidTransform, Vec3};

/// Objective value before each update, plus the value at the returned pose.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct IcpTrace {
    pub objective: Vec<f64>,
    /// Relative objective increase of every update that was discarded.
    pub rejected: Vec<f64>,
}

/// Point-to-point ICP from `init`.
///
/// Each iteration matches every transformed source point to its nearest reference point
/// and minimizes the trimmed, gated objective `Σ min(d², τ²)` over the
/// `⌈(1 − trim)·n⌉` smallest terms; the closed-form update uses the pairs among them that
/// lie inside the gate. The objective never increases from one iteration to the next.
pub fn icp(
    source: &PointCloud,
    reference: &PointCloud,
    init: &RigidTransform,
    params: &MatchParams,
) -> Result<RegistrationResult> {
    icp_traced(source, reference, init, params).map(|(r, _)| r)
}

pub fn icp_traced(
    source: &PointCloud,
    reference: &PointCloud,
    init: &RigidTransform,
    params: &MatchParams,
) -> Result<(RegistrationResult, IcpTrace)> {
    check_sizes(source, reference)?;
    let prepared = PreparedReference::new(reference, params)?;
    let mut trace = IcpTrace::default();
    let mut result = run(
        source,
        &prepared.cloud,
        &prepared.index,
        prepared.tau,
        init,
        params,
        Some(&mut trace),
    )?;
    result.overlap_ratio = prepared.overlap(&crate::cloud::transform(source, &result.transform))?;
    Ok((result, trace))
}

fn check_sizes(source: &PointCloud, reference: &PointCloud) -> Result<()> {
    for c in [source, reference] {
        if c.len() < 3 {
            return Err(Error::TooFewPoints {
                needed: 3,
                got: c.len(),
            });
        }
    }
    Ok(())
}

struct Matches {
    objective: f64,
    src: Vec<Vec3>,
    dst: Vec<Vec3>,
    rmse: f64,
}

fn correspond(
    source: &PointCloud,
    reference: &PointCloud,
    index: &(impl Lookup + ?Sized),
    tau: f64,
    keep: usize,
    t: &RigidTransform,
) -> Matches {
    let tau2 = tau * tau;
    // Everything at or beyond the gate contributes τ², so the search can stop there.
    let mut pairs: Vec<(f64, u32, u32)> = source
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| match index.nearest_within(&t.apply(p), tau2) {
            Some(n) => (n.distance_squared, i as u32, n.index as u32),
            None => (tau2, i as u32, u32::MAX),
        })
        .collect();
    let keep = keep.min(pairs.len());
    if keep < pairs.len() {
        pairs.select_nth_unstable_by(keep, |a, b| a.0.total_cmp(&b.0));
        pairs.truncate(keep);
    }
    let mut objective = 0.0;
    let mut inlier_sum = 0.0;
    let mut src = Vec::with_capacity(keep);
    let mut dst = Vec::with_capacity(keep);
    for &(d2, i, j) in &pairs {
        objective += d2.min(tau2);
        if d2 < tau2 {
            inlier_sum += d2;
            src.push(source.points[i as usize]);
            dst.push(reference.points[j as usize]);
        }
    }
    let rmse = if src.is_empty() {
        0.0
    } else {
        libm::sqrt(inlier_sum / src.len() as f64)
    };
    Matches {
        objective,
        src,
        dst,
        rmse,
    }
}

/// Extrapolated moves tried per iteration, each twice the previous.
const EXTRAPOLATION_DOUBLINGS: usize = 4;
/// Cosine between consecutive updates above which they count as the same direction.
const ALIGNED_COS: f64 = 0.985;

/// One update as a 6-vector: rotation vector scaled by the cloud radius, and the motion
/// of the cloud centroid.
#[derive(Clone, Copy)]
struct Step([f64; 6]);

impl Step {
    fn between(from: &RigidTransform, to: &RigidTransform, centroid: &Vec3, radius: f64) -> Self {
        let delta = *to * from.inverse();
        let w = nalgebra::Rotation3::from_matrix_unchecked(delta.rotation).scaled_axis() * radius;
        let c = from.apply(centroid);
        let d = delta.apply(&c) - c;
        Self([w.x, w.y, w.z, d.x, d.y, d.z])
    }

    fn aligned_with(&self, other: &Self) -> bool {
        let dot: f64 = self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum();
        let na: f64 = self.0.iter().map(|a| a * a).sum();
        let nb: f64 = other.0.iter().map(|b| b * b).sum();
        na > 0.0 && nb > 0.0 && dot > ALIGNED_COS * libm::sqrt(na * nb)
    }
}

fn max_motion(source: &PointCloud, a: &RigidTransform, b: &RigidTransform) -> f64 {
    let d2 = source
        .points
        .iter()
        .map(|p| (a.apply(p) - b.apply(p)).norm_squared())
        .fold(0.0, f64::max);
    libm::sqrt(d2)
}

/// ICP core over a prebuilt lookup. `overlap_ratio` is left at zero for the caller to fill.
pub(super) fn run(
    source: &PointCloud,
    reference: &PointCloud,
    index: &(impl Lookup + ?Sized),
    tau: f64,
    init: &RigidTransform,
    params: &MatchParams,
    mut trace: Option<&mut IcpTrace>,
) -> Result<RegistrationResult> {
    check_sizes(source, reference)?;
    let keep = libm::ceil((1.0 - params.trim_fraction) * source.len() as f64) as usize;
    let keep = keep.clamp(3.min(source.len()), source.len());

    let centroid = source.centroid().unwrap_or_else(Vec3::zeros);
    let radius = libm::sqrt(source.iter().map(|p| (p - centroid).norm_squared()).sum::<f64>() / source.len() as f64);
    let mut t = *init;
    let mut converged = false;
    let mut iterations = 0;
    let mut last_step: Option<Step> = None;
    let mut m = correspond(source, reference, index, tau, keep, &t);
    while iterations < params.max_icp_iters {
        if let Some(tr) = trace.as_deref_mut() {
            tr.objective.push(m.objective);
        }
        if m.src.len() < 3 {
            return Err(Error::DegenerateCorrespondences { matched: m.src.len() });
        }
        let mut next = fit_rigid(&m.src, &m.dst).ok_or(Error::DegenerateCorrespondences { matched: m.src.len() })?;
        iterations += 1;
        let mut next_matches = correspond(source, reference, index, tau, keep, &next);
        // Floating-point noise in the update can nudge a converged objective upward by a
        // few ulps; keep the previous pose in that case.
        if next_matches.objective > m.objective {
            if let Some(tr) = trace.as_deref_mut() {
                let rel = (next_matches.objective - m.objective) / m.objective.max(f64::MIN_POSITIVE);
                tr.rejected.push(rel);
            }
            converged = true;
            break;
        }
        let step = Step::between(&t, &next, &centroid, radius);
        if last_step.is_some_and(|prev| prev.aligned_with(&step)) {
            // Consecutive updates pointing the same way: keep doubling the step while
            // the objective keeps dropping.
            let delta = next * t.inverse();
            let mut jump = delta;
            for _ in 0..EXTRAPOLATION_DOUBLINGS {
                let candidate = jump * next;
                let cm = correspond(source, reference, index, tau, keep, &candidate);
                if cm.objective >= next_matches.objective || cm.src.len() < 3 {
                    break;
                }
                next = candidate;
                next_matches = cm;
                jump = jump * jump;
            }
        }
        let motion = max_motion(source, &t, &next);
        last_step = Some(step);
        t = next;
        m = next_matches;
        if motion <= params.convergence_eps {
            converged = true;
            break;
        }
    }
    if let Some(tr) = trace {
        tr.objective.push(m.objective);
    }
    if m.src.len() < 3 {
        return Err(Error::DegenerateCorrespondences { matched: m.src.len() });
    }
    Ok(RegistrationResult {
        transform: t,
        overlap_ratio: 0.0,
        inlier_rmse: m.rmse,
        iterations,
        converged,
        ambiguous: false,
        pose_spread_deg: 0.0,
    })
}

/// Translation-only ICP from `init`: each step shifts by the mean gated residual and is
/// kept only while the objective drops.
pub(super) fn settle_translation(
    source: &PointCloud,
    reference: &PointCloud,
    index: &(impl Lookup + ?Sized),
    tau: f64,
    init: &RigidTransform,
    params: &MatchParams,
    steps: usize,
) -> RigidTransform {
    let keep = libm::ceil((1.0 - params.trim_fraction) * source.len() as f64) as usize;
    let mut t = *init;
    let mut m = correspond(source, reference, index, tau, keep, &t);
    for _ in 0..steps {
        if m.src.is_empty() {
            break;
        }
        let shift = m
            .src
            .iter()
            .zip(&m.dst)
            .fold(Vec3::zeros(), |acc, (s, d)| acc + (d - t.apply(s)))
            / m.src.len() as f64;
        let next = RigidTransform::new(t.rotation, t.translation + shift);
        let nm = correspond(source, reference, index, tau, keep, &next);
        if nm.objective >= m.objective {
            break;
        }
        t = next;
        m = nm;
    }
    t
}
