//! Exact nearest-neighbour queries over a fixed point set.

use alloc::vec::Vec;

use crate::geometry::Vec3;

const LEAF_SIZE: usize = 8;

/// A balanced k-d tree; immutable after construction.
///
/// Queries return the exact Euclidean 1-NN. Equal distances resolve to the lowest
/// original point index.
#[derive(Clone, Debug)]
pub struct SpatialIndex {
    points: Vec<[f64; 3]>,
    ids: Vec<u32>,
    nodes: Vec<Node>,
}

#[derive(Clone, Copy, Debug)]
struct Node {
    lo: u32,
    hi: u32,
    // Leaf when `axis == 3`.
    axis: u8,
    split: f64,
    left: u32,
    right: u32,
}

/// Result of a nearest-neighbour query.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance_squared: f64,
}

impl Neighbor {
    pub fn distance(&self) -> f64 {
        libm::sqrt(self.distance_squared)
    }
}

impl SpatialIndex {
    pub fn new(points: &[Vec3]) -> Self {
        let mut entries: Vec<([f64; 3], u32)> = points
            .iter()
            .enumerate()
            .map(|(i, p)| ([p.x, p.y, p.z], i as u32))
            .collect();
        let mut nodes = Vec::with_capacity(2 * points.len() / LEAF_SIZE + 1);
        if !entries.is_empty() {
            let n = entries.len();
            build(&mut entries, 0, n, &mut nodes);
        }
        let (points, ids) = entries.into_iter().unzip();
        Self { points, ids, nodes }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Nearest point to `q`; `None` on an empty index.
    pub fn nearest(&self, q: &Vec3) -> Option<Neighbor> {
        self.nearest_excluding(q, usize::MAX)
    }

    /// Nearest point to `q` other than the point with original index `skip`.
    /// Nearest point strictly closer than `sqrt(radius_squared)`, if any.
    pub fn nearest_within(&self, q: &Vec3, radius_squared: f64) -> Option<Neighbor> {
        self.query(q, usize::MAX, radius_squared)
            .filter(|n| n.distance_squared < radius_squared)
    }

    pub fn nearest_excluding(&self, q: &Vec3, skip: usize) -> Option<Neighbor> {
        self.query(q, skip, f64::INFINITY)
    }

    fn query(&self, q: &Vec3, skip: usize, bound: f64) -> Option<Neighbor> {
        if self.nodes.is_empty() {
            return None;
        }
        let q = [q.x, q.y, q.z];
        let mut best = Best {
            id: u32::MAX,
            d2: bound,
        };
        let skip = u32::try_from(skip).unwrap_or(u32::MAX);
        let mut off = [0.0; 3];
        self.search(0, &q, skip, 0.0, &mut off, &mut best);
        (best.id != u32::MAX).then_some(Neighbor {
            index: best.id as usize,
            distance_squared: best.d2,
        })
    }

    /// `rd` is the squared distance from `q` to the node's cell, accumulated from the
    /// per-axis offsets in `off`.
    fn search(&self, node: usize, q: &[f64; 3], skip: u32, rd: f64, off: &mut [f64; 3], best: &mut Best) {
        let n = self.nodes[node];
        if n.axis == 3 {
            for k in n.lo as usize..n.hi as usize {
                let id = self.ids[k];
                if id == skip {
                    continue;
                }
                let p = &self.points[k];
                let d2 = sq(p[0] - q[0]) + sq(p[1] - q[1]) + sq(p[2] - q[2]);
                if d2 < best.d2 || (d2 == best.d2 && id < best.id) {
                    best.d2 = d2;
                    best.id = id;
                }
            }
            return;
        }
        let diff = q[n.axis as usize] - n.split;
        let (near, far) = if diff <= 0.0 {
            (n.left, n.right)
        } else {
            (n.right, n.left)
        };
        self.search(near as usize, q, skip, rd, off, best);
        let axis = n.axis as usize;
        let old = off[axis];
        let far_rd = rd - old * old + diff * diff;
        // `<=` keeps equidistant candidates on the far side reachable for tie-breaking.
        if far_rd <= best.d2 {
            off[axis] = diff;
            self.search(far as usize, q, skip, far_rd, off, best);
            off[axis] = old;
        }
    }
}

struct Best {
    id: u32,
    d2: f64,
}

fn sq(x: f64) -> f64 {
    x * x
}

fn build(entries: &mut [([f64; 3], u32)], lo: usize, hi: usize, nodes: &mut Vec<Node>) -> u32 {
    let me = nodes.len();
    nodes.push(Node {
        lo: lo as u32,
        hi: hi as u32,
        axis: 3,
        split: 0.0,
        left: 0,
        right: 0,
    });
    if hi - lo <= LEAF_SIZE {
        return me as u32;
    }
    let slice = &mut entries[lo..hi];
    let mut mins = [f64::INFINITY; 3];
    let mut maxs = [f64::NEG_INFINITY; 3];
    for (p, _) in slice.iter() {
        for a in 0..3 {
            mins[a] = mins[a].min(p[a]);
            maxs[a] = maxs[a].max(p[a]);
        }
    }
    let axis = (0..3)
        .max_by(|&a, &b| (maxs[a] - mins[a]).total_cmp(&(maxs[b] - mins[b])))
        .unwrap_or(0);
    if maxs[axis] - mins[axis] == 0.0 {
        // All points coincide.
        return me as u32;
    }
    let mid = slice.len() / 2;
    slice.select_nth_unstable_by(mid, |a, b| a.0[axis].total_cmp(&b.0[axis]));
    let split = slice[mid].0[axis];
    // Left holds coordinates <= split, right >= split; queries with diff == 0 go left
    // and still test the right side since 0 <= best.
    let left = build(entries, lo, lo + mid, nodes);
    let right = build(entries, lo + mid, hi, nodes);
    nodes[me] = Node {
        lo: lo as u32,
        hi: hi as u32,
        axis: axis as u8,
        split,
        left,
        right,
    };
    me as u32
}
