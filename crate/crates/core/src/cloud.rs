//! Point clouds, axis-aligned boxes and the basic operations on them.

use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{RigidTransform, Vec3};
use crate::kdtree::SpatialIndex;

/// An ordered list of points in meters.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    pub frame_label: Option<String>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Self {
        Self {
            points,
            frame_label: None,
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.frame_label = Some(label.into());
        self
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> core::slice::Iter<'_, Vec3> {
        self.points.iter()
    }

    pub fn all_finite(&self) -> bool {
        self.points.iter().all(|p| p.iter().all(|c| c.is_finite()))
    }

    pub fn index(&self) -> SpatialIndex {
        SpatialIndex::new(&self.points)
    }

    pub fn centroid(&self) -> Option<Vec3> {
        if self.points.is_empty() {
            return None;
        }
        let sum: Vec3 = self.points.iter().sum();
        Some(sum / self.points.len() as f64)
    }

    /// Covariance about the centroid, normalized by `n`.
    pub fn covariance(&self) -> Option<(Vec3, Matrix3<f64>)> {
        let c = self.centroid()?;
        let mut cov = Matrix3::zeros();
        for p in &self.points {
            let d = p - c;
            cov += d * d.transpose();
        }
        Some((c, cov / self.points.len() as f64))
    }

    pub fn bounds(&self) -> Option<Aabb> {
        let first = *self.points.first()?;
        let (min, max) = self
            .points
            .iter()
            .fold((first, first), |(lo, hi), p| (lo.inf(p), hi.sup(p)));
        Some(Aabb { min, max })
    }

    pub fn extend(&mut self, other: &PointCloud) {
        self.points.extend_from_slice(&other.points);
    }
}

impl From<Vec<Vec3>> for PointCloud {
    fn from(points: Vec<Vec3>) -> Self {
        Self::new(points)
    }
}

impl FromIterator<Vec3> for PointCloud {
    fn from_iter<I: IntoIterator<Item = Vec3>>(iter: I) -> Self {
        Self::new(iter.into_iter().collect())
    }
}

/// Closed axis-aligned box, `min <= max` componentwise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AabbRepr", into = "AabbRepr")]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

#[derive(Serialize, Deserialize)]
struct AabbRepr {
    min: [f64; 3],
    max: [f64; 3],
}

impl TryFrom<AabbRepr> for Aabb {
    type Error = Error;
    fn try_from(r: AabbRepr) -> Result<Self> {
        Aabb::new(
            Vec3::new(r.min[0], r.min[1], r.min[2]),
            Vec3::new(r.max[0], r.max[1], r.max[2]),
        )
    }
}

impl From<Aabb> for AabbRepr {
    fn from(b: Aabb) -> Self {
        AabbRepr {
            min: [b.min.x, b.min.y, b.min.z],
            max: [b.max.x, b.max.y, b.max.z],
        }
    }
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Result<Self> {
        let finite = min.iter().chain(max.iter()).all(|v| v.is_finite());
        if !finite || (0..3).any(|i| min[i] > max[i]) {
            return Err(Error::InvalidRange(alloc::format!(
                "box min must be <= max componentwise, got min {:?} max {:?}",
                min.as_slice(),
                max.as_slice()
            )));
        }
        Ok(Self { min, max })
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|i| self.min[i] <= p[i] && p[i] <= self.max[i])
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn volume(&self) -> f64 {
        let e = self.extent();
        e.x * e.y * e.z
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) / 2.0
    }

    pub fn padded(&self, margin: f64) -> Aabb {
        let m = Vec3::repeat(margin.max(0.0));
        Aabb {
            min: self.min - m,
            max: self.max + m,
        }
    }

    /// Box of the transformed corners.
    pub fn transformed(&self, t: &RigidTransform) -> Aabb {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for k in 0..8 {
            let c = Vec3::new(
                if k & 1 == 0 { self.min.x } else { self.max.x },
                if k & 2 == 0 { self.min.y } else { self.max.y },
                if k & 4 == 0 { self.min.z } else { self.max.z },
            );
            let p = t.apply(&c);
            lo = lo.inf(&p);
            hi = hi.sup(&p);
        }
        Aabb { min: lo, max: hi }
    }
}

/// One output point per occupied voxel: the centroid of the points falling in it.
///
/// Voxels are the half-open cells `[k·voxel, (k+1)·voxel)` on each axis; output is
/// ordered by voxel key.
pub fn voxel_downsample(pc: &PointCloud, voxel: f64) -> Result<PointCloud> {
    if !(voxel > 0.0 && voxel.is_finite()) {
        return Err(Error::NonPositiveVoxel(voxel));
    }
    let key = |p: &Vec3| {
        [
            libm::floor(p.x / voxel) as i64,
            libm::floor(p.y / voxel) as i64,
            libm::floor(p.z / voxel) as i64,
        ]
    };
    let mut keyed: Vec<([i64; 3], u32)> = pc.points.iter().enumerate().map(|(i, p)| (key(p), i as u32)).collect();
    keyed.sort_unstable();
    let mut out = Vec::new();
    let mut start = 0;
    while start < keyed.len() {
        let k = keyed[start].0;
        let mut end = start;
        let mut sum = Vec3::zeros();
        while end < keyed.len() && keyed[end].0 == k {
            sum += pc.points[keyed[end].1 as usize];
            end += 1;
        }
        out.push(sum / (end - start) as f64);
        start = end;
    }
    Ok(PointCloud {
        points: out,
        frame_label: pc.frame_label.clone(),
    })
}

/// Mean distance from each point to its nearest other point.
pub fn average_spacing(pc: &PointCloud) -> Result<f64> {
    average_spacing_with(pc, &pc.index())
}

/// [`average_spacing`] reusing an index already built over `pc`.
pub fn average_spacing_with(pc: &PointCloud, index: &SpatialIndex) -> Result<f64> {
    if pc.len() < 2 {
        return Err(Error::TooFewPoints {
            needed: 2,
            got: pc.len(),
        });
    }
    let total: f64 = pc
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| index.nearest_excluding(p, i).map(|n| n.distance()).unwrap_or(0.0))
        .sum();
    Ok(total / pc.len() as f64)
}

pub fn transform(pc: &PointCloud, t: &RigidTransform) -> PointCloud {
    PointCloud {
        points: pc.points.iter().map(|p| t.apply(p)).collect(),
        frame_label: pc.frame_label.clone(),
    }
}

/// Points inside the closed box, in original order.
pub fn crop(pc: &PointCloud, b: &Aabb) -> PointCloud {
    PointCloud {
        points: pc.points.iter().filter(|p| b.contains(p)).copied().collect(),
        frame_label: pc.frame_label.clone(),
    }
}
