//! Rigid registration of a partial scan (source) onto a reference model.
//!
//! `register` runs point-to-point ICP from many coarse seeds, narrows them down by
//! overlap ratio on voxel-filtered clouds, and refines the best one at full resolution.
//! All transforms returned here map source coordinates into the reference frame.

mod coarse;
mod grid;
mod icp;
mod procrustes;

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::cloud::{average_spacing_with, voxel_downsample, PointCloud};
use crate::error::{Error, Result};
use crate::geometry::RigidTransform;
use crate::kdtree::SpatialIndex;
use grid::{DistanceGrid, Lookup};

pub use coarse::{coarse_align, coarse_align_with, rotation_grid};
pub use icp::{icp, icp_traced, IcpTrace};
pub use procrustes::fit_rigid;

/// Overlap must be within this of the best candidate to count as a competing solution.
pub const AMBIGUITY_OVERLAP_BAND: f64 = 0.02;
/// A competing solution must also fit within this fraction of the gate of the best
/// one's inlier RMSE.
pub const AMBIGUITY_RMSE_FRACTION: f64 = 0.05;
/// Competing solutions further than this from the best (radians) make the pose ambiguous.
pub const AMBIGUITY_ANGLE: f64 = 5.0 * core::f64::consts::PI / 180.0;
/// Coarse solutions closer than this (m) and [`AMBIGUITY_ANGLE`] count as the same one.
const AMBIGUITY_TRANSLATION: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchParams {
    /// Correspondence gate as a multiple of the reference's average point spacing.
    pub tau_factor: f64,
    /// Voxel edge (m) applied before spacing estimation, scoring and coarse search.
    pub voxel: f64,
    pub max_icp_iters: usize,
    /// ICP stops once no source point moves more than this (m) in one iteration.
    pub convergence_eps: f64,
    /// Fraction of worst residuals dropped from every ICP update.
    pub trim_fraction: f64,
    /// Yaw seeds per coarse candidate about the reference's vertical axis.
    pub yaw_seeds: usize,
    /// Extra orientation seeds spread over SO(3) for views with unreliable principal axes.
    pub rotation_seeds: usize,
    /// Distinct coarse solutions refined at full resolution before the final choice.
    pub refine_candidates: usize,
}

impl Default for MatchParams {
    fn default() -> Self {
        Self {
            tau_factor: 1.5,
            voxel: 0.015,
            max_icp_iters: 60,
            convergence_eps: 1e-6,
            trim_fraction: 0.1,
            yaw_seeds: 12,
            rotation_seeds: 240,
            refine_candidates: 4,
        }
    }
}

impl MatchParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |name, reason: &str| {
            Err(Error::InvalidParameter {
                name,
                reason: reason.into(),
            })
        };
        if !(self.tau_factor > 0.0 && self.tau_factor.is_finite()) {
            return bad("tau_factor", "must be positive");
        }
        if !(self.voxel > 0.0 && self.voxel.is_finite()) {
            return Err(Error::NonPositiveVoxel(self.voxel));
        }
        if !(0.0..1.0).contains(&self.trim_fraction) {
            return bad("trim_fraction", "must lie in [0, 1)");
        }
        if self.max_icp_iters == 0 {
            return bad("max_icp_iters", "must be at least 1");
        }
        if !(self.convergence_eps >= 0.0) {
            return bad("convergence_eps", "must be non-negative");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegistrationResult {
    /// Maps source coordinates into the reference frame.
    pub transform: RigidTransform,
    pub overlap_ratio: f64,
    /// RMS distance (m) over the gated, trimmed correspondences at the final pose.
    pub inlier_rmse: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Several distinct poses explain the scan about equally well.
    #[serde(default)]
    pub ambiguous: bool,
    /// Largest rotation (deg) between the best pose and any competing candidate.
    #[serde(default)]
    pub pose_spread_deg: f64,
}

/// A reference cloud with everything registration needs precomputed.
///
/// Building one is the expensive part of registering against a model; reuse it when the
/// same reference is matched repeatedly.
#[derive(Clone, Debug)]
pub struct PreparedReference {
    pub cloud: PointCloud,
    pub index: SpatialIndex,
    pub filtered: PointCloud,
    pub filtered_index: SpatialIndex,
    /// Approximate lookups into `cloud` for the seed stages, for the gate and for
    /// [`PROBE_GATE_FACTOR`] times the gate.
    grid: Option<DistanceGrid>,
    wide_grid: Option<DistanceGrid>,
    /// Correspondence gate (m).
    pub tau: f64,
    pub params: MatchParams,
}

impl PreparedReference {
    pub fn new(reference: &PointCloud, params: &MatchParams) -> Result<Self> {
        params.validate()?;
        if reference.is_empty() {
            return Err(Error::EmptyInput);
        }
        let filtered = voxel_downsample(reference, params.voxel)?;
        let filtered_index = filtered.index();
        let tau = gate_distance(&filtered, &filtered_index, params);
        Ok(Self {
            grid: DistanceGrid::new(reference, tau, tau / GRID_CELLS_PER_GATE),
            wide_grid: DistanceGrid::new(reference, PROBE_GATE_FACTOR * tau, tau / WIDE_GRID_CELLS_PER_GATE),
            index: reference.index(),
            cloud: reference.clone(),
            filtered,
            filtered_index,
            tau,
            params: *params,
        })
    }

    /// Overlap ratio of an already-aligned source against this reference.
    pub fn overlap(&self, aligned_source: &PointCloud) -> Result<f64> {
        if aligned_source.is_empty() {
            return Err(Error::EmptyInput);
        }
        let src = voxel_downsample(aligned_source, self.params.voxel)?;
        Ok(self.overlap_filtered(&src))
    }

    /// Like [`Self::overlap`] for a source that is already voxel-filtered.
    pub fn overlap_filtered(&self, filtered_source: &PointCloud) -> f64 {
        let tau2 = self.tau * self.tau;
        let matched = filtered_source
            .iter()
            .filter(|p| self.filtered_index.nearest_within(p, tau2).is_some())
            .count();
        (matched as f64 / self.filtered.len() as f64).min(1.0)
    }
}

fn gate_distance(filtered: &PointCloud, index: &SpatialIndex, params: &MatchParams) -> f64 {
    // A single surviving voxel has no spacing; fall back to the voxel edge.
    let spacing = average_spacing_with(filtered, index).unwrap_or(params.voxel);
    params.tau_factor * spacing.max(f64::MIN_POSITIVE)
}

/// `N_matched / N_ref` on voxel-filtered clouds.
///
/// A filtered source point is matched when its nearest filtered reference point is closer
/// than `tau_factor ×` the filtered reference's average spacing. Clamped to `[0, 1]`.
pub fn overlap_ratio(aligned_source: &PointCloud, reference: &PointCloud, params: &MatchParams) -> Result<f64> {
    if aligned_source.is_empty() || reference.is_empty() {
        return Err(Error::EmptyInput);
    }
    PreparedReference::new(reference, params)?.overlap(aligned_source)
}

pub fn register(source: &PointCloud, reference: &PointCloud, params: &MatchParams) -> Result<RegistrationResult> {
    let prepared = PreparedReference::new(reference, params)?;
    register_prepared(source, &prepared)
}

/// Multi-start registration against a prepared reference.
///
/// Seeds are the coarse candidates of [`coarse_align_with`] plus
/// [`MatchParams::rotation_seeds`] orientations from [`rotation_grid`]. Each one is probed
/// with a small source subset under a widened gate, using approximate lookups; the best
/// distinct probes, and half-turned copies of the leaders, then run to convergence with a
/// larger subset. The best few distinct solutions are refined against the exact
/// reference, and the winner (highest overlap, ties to the lower inlier RMSE) gets a
/// final pass over every source point. The result is flagged ambiguous when another refined
/// solution converges to within [`AMBIGUITY_OVERLAP_BAND`] of the winner's overlap, and
/// to a comparable inlier RMSE, while differing from it by more than [`AMBIGUITY_ANGLE`].
pub fn register_prepared(source: &PointCloud, reference: &PreparedReference) -> Result<RegistrationResult> {
    let refined = search(source, reference)?;
    let best = &refined[0];
    let spread = refined
        .iter()
        .filter(|c| {
            c.result.converged
                && c.overlap >= best.overlap - AMBIGUITY_OVERLAP_BAND
                && c.result.inlier_rmse <= best.result.inlier_rmse + AMBIGUITY_RMSE_FRACTION * reference.tau
        })
        .map(|c| crate::geometry::angle_between(&c.result.transform.rotation, &best.result.transform.rotation))
        .fold(0.0, f64::max);

    let mut out = if source.len() <= REFINE_POINTS {
        best.result.clone()
    } else {
        icp::run(
            source,
            &reference.cloud,
            &reference.index,
            reference.tau,
            &best.result.transform,
            &reference.params,
            None,
        )?
    };
    out.overlap_ratio = reference.overlap(&crate::cloud::transform(source, &out.transform))?;
    out.ambiguous = spread > AMBIGUITY_ANGLE;
    out.pose_spread_deg = spread.to_degrees();
    Ok(out)
}

/// Step size, as a fraction of the gate, at which the seed stages count as converged.
const COARSE_EPS_FRACTION: f64 = 0.01;
/// Distinct seeds carried past the first cut.
const SURVIVORS: usize = 48;
/// Leading coarse solutions that also get their half-turned variants tried.
const FLIPPED_LEADERS: usize = 2;
/// Source points used when refining candidates against the full reference.
const REFINE_POINTS: usize = 1000;
/// Probe-stage gate as a multiple of the correspondence gate.
const PROBE_GATE_FACTOR: f64 = 3.0;
/// Translation-only steps applied to every seed before probing.
const SETTLE_STEPS: usize = 10;
/// Iteration cap for probes.
const PROBE_ITERS: usize = 25;
/// Lookup table cell counts per gate length.
const GRID_CELLS_PER_GATE: f64 = 6.0;
const WIDE_GRID_CELLS_PER_GATE: f64 = 2.0;
/// Source points used to probe seeds.
const PROBE_POINTS: usize = 100;
/// Source points used to run the surviving seeds to convergence.
const COARSE_POINTS: usize = 400;

/// Refined candidates in ranking order; never empty.
fn search(source: &PointCloud, reference: &PreparedReference) -> Result<Vec<Candidate>> {
    let params = &reference.params;
    if source.len() < 3 {
        return Err(Error::TooFewPoints {
            needed: 3,
            got: source.len(),
        });
    }
    let mut seeds = coarse_align_with(source, &reference.cloud, params.yaw_seeds)?;
    seeds.extend(coarse::grid_seeds(source, &reference.cloud, params.rotation_seeds));
    let filtered_src = voxel_downsample(source, params.voxel)?;
    let mut last_err = None;
    let exact: &dyn Lookup = &reference.index;
    let fine = reference.grid.as_ref().map_or(exact, |g| g as &dyn Lookup);
    let wide = reference.wide_grid.as_ref().map_or(exact, |g| g as &dyn Lookup);
    let mut stage =
        |src: &PointCloud, lookup: &dyn Lookup, gate: f64, inits: &[RigidTransform], iters: usize, eps: f64| {
            let stage_params = MatchParams {
                max_icp_iters: iters,
                convergence_eps: eps,
                ..*params
            };
            let mut out: Vec<Candidate> = Vec::with_capacity(inits.len());
            for init in inits {
                match icp::run(src, &reference.cloud, lookup, gate, init, &stage_params, None) {
                    Ok(r) => out.push(Candidate::score(r, reference, &filtered_src)),
                    Err(e) => last_err = Some(e),
                }
            }
            out.sort_by(Candidate::ranking);
            out
        };

    // The seed stages only rank candidates, so they stop at a coarser step size. Probes
    // use a wider gate to pull in seeds that start far off.
    let tau = reference.tau;
    let coarse_eps = params.convergence_eps.max(COARSE_EPS_FRACTION * tau);
    let probe_src = stride_subsample(source, PROBE_POINTS);
    let seeds: Vec<RigidTransform> = seeds
        .iter()
        .map(|s| {
            icp::settle_translation(
                &probe_src,
                &reference.cloud,
                wide,
                PROBE_GATE_FACTOR * tau,
                s,
                params,
                SETTLE_STEPS,
            )
        })
        .collect();
    let probed = stage(
        &probe_src,
        wide,
        PROBE_GATE_FACTOR * tau,
        &seeds,
        PROBE_ITERS,
        coarse_eps,
    );
    let survivors = distinct_poses(&probed, SURVIVORS);
    let coarse_src = stride_subsample(source, COARSE_POINTS);
    let mut coarse = stage(&coarse_src, fine, tau, &survivors, params.max_icp_iters, coarse_eps);
    let flips: Vec<RigidTransform> = distinct_poses(&coarse, FLIPPED_LEADERS)
        .iter()
        .flat_map(|t| coarse::flipped(source, t))
        .collect();
    coarse.extend(stage(&coarse_src, fine, tau, &flips, params.max_icp_iters, coarse_eps));
    coarse.sort_by(Candidate::ranking);
    let picked = distinct_poses(&coarse, params.refine_candidates.max(1));
    let refined = stage(
        &stride_subsample(source, REFINE_POINTS),
        exact,
        tau,
        &picked,
        params.max_icp_iters.div_ceil(2),
        params.convergence_eps,
    );
    if refined.is_empty() {
        return Err(last_err.unwrap_or(Error::DegenerateCorrespondences { matched: 0 }));
    }
    Ok(refined)
}

/// The first `limit` poses of a ranked list that are pairwise distinct.
fn distinct_poses(ranked: &[Candidate], limit: usize) -> Vec<RigidTransform> {
    let mut out: Vec<&Candidate> = Vec::new();
    for c in ranked {
        if out.len() >= limit {
            break;
        }
        if out.iter().all(|p| c.distinct_from(p)) {
            out.push(c);
        }
    }
    out.into_iter().map(|c| c.result.transform).collect()
}

/// Every k-th point, with k chosen so at most `max_points` remain.
fn stride_subsample(pc: &PointCloud, max_points: usize) -> PointCloud {
    if pc.len() <= max_points {
        return pc.clone();
    }
    let step = pc.len().div_ceil(max_points);
    PointCloud {
        points: pc.points.iter().step_by(step).copied().collect(),
        frame_label: pc.frame_label.clone(),
    }
}

struct Candidate {
    result: RegistrationResult,
    /// Overlap of the source's fixed voxel filtering, so every candidate is scored on the
    /// same points.
    overlap: f64,
}

impl Candidate {
    fn score(result: RegistrationResult, reference: &PreparedReference, filtered_src: &PointCloud) -> Self {
        let overlap = reference.overlap_filtered(&crate::cloud::transform(filtered_src, &result.transform));
        Self { result, overlap }
    }

    fn ranking(a: &Self, b: &Self) -> core::cmp::Ordering {
        b.overlap
            .total_cmp(&a.overlap)
            .then(a.result.inlier_rmse.total_cmp(&b.result.inlier_rmse))
    }

    fn distinct_from(&self, other: &Self) -> bool {
        let (a, b) = (&self.result.transform, &other.result.transform);
        crate::geometry::angle_between(&a.rotation, &b.rotation) > AMBIGUITY_ANGLE
            || (a.translation - b.translation).norm() > AMBIGUITY_TRANSLATION
    }
}
