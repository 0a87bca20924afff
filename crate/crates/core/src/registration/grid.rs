//! Approximate nearest-neighbour lookup by precomputed voxel table.

use alloc::vec::Vec;

use crate::cloud::PointCloud;
use crate::geometry::Vec3;
use crate::kdtree::{Neighbor, SpatialIndex};

/// Largest table built, in cells.
const MAX_CELLS: usize = 1 << 21;

/// Nearest-neighbour source used by ICP.
pub(super) trait Lookup {
    /// Some point closer than `sqrt(radius_squared)` to `q`, ideally the nearest.
    fn nearest_within(&self, q: &Vec3, radius_squared: f64) -> Option<Neighbor>;
}

impl Lookup for SpatialIndex {
    fn nearest_within(&self, q: &Vec3, radius_squared: f64) -> Option<Neighbor> {
        SpatialIndex::nearest_within(self, q, radius_squared)
    }
}

/// Every cell of a box around the cloud stores (approximately) the point nearest its
/// centre.
///
/// A query returns that point with its exact distance to `q`. The table is filled by
/// a forward and a backward raster sweep that hand each cell the best candidate of its
/// already-visited neighbours, so answers are off from the true nearest neighbour by
/// about a cell diagonal.
#[derive(Clone, Debug)]
pub(super) struct DistanceGrid {
    points: Vec<Vec3>,
    origin: Vec3,
    cell: f64,
    dims: [usize; 3],
    cells: Vec<u32>,
}

impl DistanceGrid {
    /// Table over the cloud's bounds padded by `pad`, with cells of about `cell` (grown
    /// as needed to stay under the size cap).
    pub(super) fn new(cloud: &PointCloud, pad: f64, cell: f64) -> Option<Self> {
        let mut cell = cell;
        let b0 = cloud.bounds()?.padded(pad);
        let count = |b: &crate::cloud::Aabb, c: f64| -> Option<[usize; 3]> {
            let e = b.extent();
            let d = [e.x, e.y, e.z].map(|x| libm::ceil(x / c) as usize + 1);
            d.iter()
                .try_fold(1usize, |acc, &x| acc.checked_mul(x))
                .filter(|&n| n <= MAX_CELLS)
                .map(|_| d)
        };
        let (b, dims) = loop {
            if !(cell > 0.0 && cell.is_finite()) {
                return None;
            }
            let b = b0.padded(cell);
            if let Some(d) = count(&b, cell) {
                break (b, d);
            }
            cell *= 1.25;
        };
        let n = dims[0] * dims[1] * dims[2];
        let mut grid = Self {
            points: cloud.points.clone(),
            origin: b.min,
            cell,
            dims,
            cells: alloc::vec![u32::MAX; n],
        };
        let mut best = alloc::vec![f64::INFINITY; n];
        for (id, p) in cloud.iter().enumerate() {
            let Some(slot) = grid.slot(p) else { continue };
            let d2 = (grid.centre(slot) - p).norm_squared();
            if d2 < best[slot] {
                best[slot] = d2;
                grid.cells[slot] = id as u32;
            }
        }
        let (sj, si) = (dims[2] as isize, (dims[1] * dims[2]) as isize);
        // Flat offsets of the neighbours that precede a cell in raster order; negated
        // for the backward sweep.
        let mut before = [0isize; 13];
        let mut m = 0;
        for di in -1..=1 {
            for dj in -1..=1 {
                for dk in -1..=1 {
                    let flat = di * si + dj * sj + dk;
                    if flat < 0 {
                        before[m] = flat;
                        m += 1;
                    }
                }
            }
        }
        // Border cells are only ever read, which keeps every neighbour in range.
        let interior = |d: usize| 1..d.saturating_sub(1);
        for backward in [false, true] {
            let sign = if backward { -1 } else { 1 };
            let mut visit = |i: usize, j: usize, k: usize| {
                let slot = (i * dims[1] + j) * dims[2] + k;
                let centre = b.min + Vec3::new(i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5) * cell;
                for off in before {
                    let id = grid.cells[(slot as isize + sign * off) as usize];
                    if id == u32::MAX || id == grid.cells[slot] {
                        continue;
                    }
                    let d2 = (grid.points[id as usize] - centre).norm_squared();
                    if d2 < best[slot] || (d2 == best[slot] && id < grid.cells[slot]) {
                        best[slot] = d2;
                        grid.cells[slot] = id;
                    }
                }
            };
            for i in interior(dims[0]) {
                for j in interior(dims[1]) {
                    for k in interior(dims[2]) {
                        if backward {
                            visit(dims[0] - 1 - i, dims[1] - 1 - j, dims[2] - 1 - k);
                        } else {
                            visit(i, j, k);
                        }
                    }
                }
            }
        }
        Some(grid)
    }

    fn slot(&self, q: &Vec3) -> Option<usize> {
        let rel = (q - self.origin) / self.cell;
        let mut slot = 0;
        for (x, d) in [rel.x, rel.y, rel.z].into_iter().zip(self.dims) {
            if !(x >= 0.0 && x < d as f64) {
                return None;
            }
            slot = slot * d + x as usize;
        }
        Some(slot)
    }

    fn centre(&self, slot: usize) -> Vec3 {
        let k = slot % self.dims[2];
        let j = (slot / self.dims[2]) % self.dims[1];
        let i = slot / (self.dims[1] * self.dims[2]);
        self.origin + Vec3::new(i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5) * self.cell
    }
}

impl Lookup for DistanceGrid {
    fn nearest_within(&self, q: &Vec3, radius_squared: f64) -> Option<Neighbor> {
        let id = self.cells[self.slot(q)?];
        if id == u32::MAX {
            return None;
        }
        let d2 = (self.points[id as usize] - q).norm_squared();
        (d2 < radius_squared).then_some(Neighbor {
            index: id as usize,
            distance_squared: d2,
        })
    }
}
