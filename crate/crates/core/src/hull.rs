//! Vertices of a 3D convex hull (quickhull), with lower-dimensional fallbacks.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::geometry::Vec3;

/// Relative tolerance on signed plane distances.
const REL_EPS: f64 = 1e-11;

struct Face {
    v: [usize; 3],
    normal: Vec3,
    offset: f64,
    outside: Vec<usize>,
    alive: bool,
}

impl Face {
    fn distance(&self, p: &Vec3) -> f64 {
        self.normal.dot(p) - self.offset
    }
}

/// `mask[i]` is true when `points[i]` is a vertex of the convex hull.
///
/// Points lying on a hull face or edge without being a vertex are not reported, and of
/// several coincident vertices only one is. Coplanar and collinear inputs fall back to a
/// 2D hull or the two extreme points.
pub fn hull_vertices(points: &[Vec3]) -> Vec<bool> {
    let n = points.len();
    let mut mask = vec![false; n];
    if n == 0 {
        return mask;
    }
    let scale = points
        .iter()
        .map(|p| p.amax())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let eps = REL_EPS * scale;

    // Initial segment: the farthest pair among axis extremes.
    let mut extremes = Vec::with_capacity(6);
    for axis in 0..3 {
        extremes.push(argmax(points, |p| -p[axis]));
        extremes.push(argmax(points, |p| p[axis]));
    }
    let (mut i0, mut i1, mut best) = (0, 0, -1.0);
    for &a in &extremes {
        for &b in &extremes {
            let d = (points[a] - points[b]).norm_squared();
            if d > best {
                best = d;
                i0 = a;
                i1 = b;
            }
        }
    }
    if libm::sqrt(best) <= eps {
        mask[i0] = true;
        return mask;
    }

    let dir = (points[i1] - points[i0]).normalize();
    let line_dist = |p: &Vec3| {
        let d = p - points[i0];
        (d - dir * d.dot(&dir)).norm()
    };
    let i2 = argmax(points, line_dist);
    if line_dist(&points[i2]) <= eps {
        let proj = |p: &Vec3| (p - points[i0]).dot(&dir);
        mask[argmax(points, |p| -proj(p))] = true;
        mask[argmax(points, proj)] = true;
        return mask;
    }

    let plane_n = (points[i1] - points[i0]).cross(&(points[i2] - points[i0])).normalize();
    let plane_dist = |p: &Vec3| (p - points[i0]).dot(&plane_n);
    let i3 = argmax(points, |p| libm::fabs(plane_dist(p)));
    if libm::fabs(plane_dist(&points[i3])) <= eps {
        planar_hull(points, &points[i0], &dir, &plane_n, eps, &mut mask);
        return mask;
    }

    let interior = (points[i0] + points[i1] + points[i2] + points[i3]) / 4.0;
    let faces = quickhull(points, [i0, i1, i2, i3], &interior, eps);
    for f in faces.iter().filter(|f| f.alive) {
        for &v in &f.v {
            mask[v] = true;
        }
    }
    mask
}

fn quickhull(points: &[Vec3], seeds: [usize; 4], interior: &Vec3, eps: f64) -> Vec<Face> {
    let [i0, i1, i2, i3] = seeds;
    let mut faces: Vec<Face> = Vec::new();
    // Directed edge (a, b) of an alive face → that face.
    let mut edges: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for tri in [[i0, i1, i2], [i0, i1, i3], [i0, i2, i3], [i1, i2, i3]] {
        push_face(&mut faces, &mut edges, make_face(points, tri, interior));
    }
    for i in 0..points.len() {
        if !seeds.contains(&i) {
            assign(points, i, &mut faces, 0..4, eps);
        }
    }

    let mut work: Vec<usize> = (0..faces.len()).collect();
    let mut mark = vec![false; faces.len()];
    while let Some(fi) = work.pop() {
        if !faces[fi].alive || faces[fi].outside.is_empty() {
            continue;
        }
        let eye = {
            let f = &faces[fi];
            *f.outside
                .iter()
                .max_by(|&&a, &&b| f.distance(&points[a]).total_cmp(&f.distance(&points[b])))
                .expect("outside set is non-empty")
        };
        let eye_p = points[eye];

        // Faces visible from the eye form a connected patch around `fi`.
        mark.resize(faces.len(), false);
        let mut visible = vec![fi];
        mark[fi] = true;
        let mut horizon = Vec::new();
        let mut k = 0;
        while k < visible.len() {
            let v = faces[visible[k]].v;
            for e in 0..3 {
                let (a, b) = (v[e], v[(e + 1) % 3]);
                let Some(&nb) = edges.get(&(b, a)) else {
                    continue;
                };
                if mark[nb] {
                    continue;
                }
                if faces[nb].distance(&eye_p) > eps {
                    mark[nb] = true;
                    visible.push(nb);
                } else {
                    horizon.push((a, b));
                }
            }
            k += 1;
        }
        // An edge reached from two visible faces is interior to the patch.
        horizon.retain(|&(a, b)| edges.get(&(b, a)).is_some_and(|&nb| !mark[nb]));

        let mut orphans = Vec::new();
        for &f in &visible {
            mark[f] = false;
            faces[f].alive = false;
            let v = faces[f].v;
            for e in 0..3 {
                edges.remove(&(v[e], v[(e + 1) % 3]));
            }
            orphans.append(&mut faces[f].outside);
        }
        let first_new = faces.len();
        for (a, b) in horizon {
            push_face(&mut faces, &mut edges, make_face(points, [a, b, eye], interior));
        }
        let new_faces = first_new..faces.len();
        for p in orphans {
            // Orphans above no new face are inside the grown hull.
            if p != eye {
                assign(points, p, &mut faces, new_faces.clone(), eps);
            }
        }
        work.extend(new_faces);
    }
    faces
}

fn push_face(faces: &mut Vec<Face>, edges: &mut BTreeMap<(usize, usize), usize>, face: Face) {
    let id = faces.len();
    for e in 0..3 {
        edges.insert((face.v[e], face.v[(e + 1) % 3]), id);
    }
    faces.push(face);
}

fn argmax(points: &[Vec3], f: impl Fn(&Vec3) -> f64) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, p) in points.iter().enumerate() {
        let v = f(p);
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

fn make_face(points: &[Vec3], mut v: [usize; 3], interior: &Vec3) -> Face {
    let mut normal = (points[v[1]] - points[v[0]]).cross(&(points[v[2]] - points[v[0]]));
    if normal.dot(&(interior - points[v[0]])) > 0.0 {
        v.swap(0, 1);
        normal = -normal;
    }
    let len = normal.norm();
    let (normal, offset) = if len > 0.0 {
        let n = normal / len;
        (n, n.dot(&points[v[0]]))
    } else {
        // Zero-area face: nothing is ever above it.
        (Vec3::zeros(), f64::INFINITY)
    };
    Face {
        v,
        normal,
        offset,
        outside: Vec::new(),
        alive: true,
    }
}

fn assign(points: &[Vec3], p: usize, faces: &mut [Face], range: core::ops::Range<usize>, eps: f64) -> bool {
    for k in range {
        if faces[k].alive && faces[k].distance(&points[p]) > eps {
            faces[k].outside.push(p);
            return true;
        }
    }
    false
}

/// Andrew's monotone chain in the plane through `origin` spanned by `u` and `n × u`.
fn planar_hull(points: &[Vec3], origin: &Vec3, u: &Vec3, n: &Vec3, eps: f64, mask: &mut [bool]) {
    let w = n.cross(u);
    let mut pts: Vec<(f64, f64, usize)> = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let d = p - origin;
            (d.dot(u), d.dot(&w), i)
        })
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.dedup_by(|a, b| libm::fabs(a.0 - b.0) <= eps && libm::fabs(a.1 - b.1) <= eps);
    if pts.len() < 3 {
        for p in &pts {
            mask[p.2] = true;
        }
        return;
    }
    let cross = |o: &(f64, f64, usize), a: &(f64, f64, usize), b: &(f64, f64, usize)| {
        (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
    };
    // Cross products scale with coordinates squared.
    let area_eps = eps * eps / REL_EPS;
    let mut chain: Vec<(f64, f64, usize)> = Vec::with_capacity(2 * pts.len());
    let forward: Vec<usize> = (0..pts.len()).collect();
    for order in [forward.clone(), forward.into_iter().rev().collect()] {
        let start = chain.len();
        for p in order.iter().map(|&k| &pts[k]) {
            while chain.len() >= start + 2 && cross(&chain[chain.len() - 2], &chain[chain.len() - 1], p) <= area_eps {
                chain.pop();
            }
            chain.push(*p);
        }
        chain.pop();
    }
    for p in chain {
        mask[p.2] = true;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn cube_corners_and_interior() {
        let mut pts = Vec::new();
        for k in 0..8 {
            pts.push(Vec3::new((k & 1) as f64, ((k >> 1) & 1) as f64, ((k >> 2) & 1) as f64));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            pts.push(Vec3::new(rng.random(), rng.random(), rng.random()) * 0.98 + Vec3::repeat(0.01));
        }
        // Face centre: on the hull but not a vertex.
        pts.push(Vec3::new(0.5, 0.5, 1.0));
        let mask = hull_vertices(&pts);
        assert!(mask[..8].iter().all(|&m| m));
        assert!(mask[8..].iter().all(|&m| !m));
    }

    #[test]
    fn sphere_points_are_all_vertices() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts: Vec<Vec3> = (0..2000)
            .map(|_| {
                let v = Vec3::new(
                    rng.random::<f64>() - 0.5,
                    rng.random::<f64>() - 0.5,
                    rng.random::<f64>() - 0.5,
                );
                v.normalize()
            })
            .collect();
        let mask = hull_vertices(&pts);
        assert_eq!(mask.iter().filter(|&&m| m).count(), 2000);
    }

    #[test]
    fn matches_brute_force_on_random_clouds() {
        // Oracle: a point is a vertex iff it is strictly outside the hull of the others,
        // decided by a brute-force search for a separating plane through triples.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let pts: Vec<Vec3> = (0..25)
                .map(|_| Vec3::new(rng.random(), rng.random(), rng.random()))
                .collect();
            let mask = hull_vertices(&pts);
            for (i, &is_vertex) in mask.iter().enumerate() {
                assert_eq!(is_vertex, brute_is_vertex(&pts, i), "point {i}");
            }
        }
    }

    fn brute_is_vertex(pts: &[Vec3], i: usize) -> bool {
        // `i` is a vertex iff some hull facet of all points contains it. Facets are
        // triples with every other point on one side.
        let n = pts.len();
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    if a == b || b == c || a == c || ![a, b, c].contains(&i) {
                        continue;
                    }
                    let nrm = (pts[b] - pts[a]).cross(&(pts[c] - pts[a]));
                    if (0..n).all(|k| nrm.dot(&(pts[k] - pts[a])) <= 1e-12) {
                        return true;
                    }
                }
            }
        }
        false
    }

    #[test]
    fn every_point_lies_below_every_face() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in [50, 400, 3000] {
            let pts: Vec<Vec3> = (0..n)
                .map(|_| Vec3::new(rng.random(), rng.random::<f64>() * 3.0, rng.random::<f64>().powi(3)))
                .collect();
            let mask = hull_vertices(&pts);
            let seeds = [0, 1, 2, 3];
            let interior = seeds.iter().map(|&i| pts[i]).sum::<Vec3>() / 4.0;
            let faces = quickhull(&pts, seeds, &interior, 1e-11 * 3.0);
            let alive: Vec<&Face> = faces.iter().filter(|f| f.alive).collect();
            // Closed 2-manifold: V - E + F = 2 with E = 3F/2.
            let verts = mask.iter().filter(|&&m| m).count();
            assert_eq!(verts + alive.len() - 3 * alive.len() / 2, 2);
            for f in &alive {
                for p in &pts {
                    assert!(f.distance(p) <= 1e-9);
                }
            }
        }
    }

    #[test]
    fn degenerate_inputs() {
        assert!(hull_vertices(&[]).is_empty());
        assert_eq!(hull_vertices(&[Vec3::zeros()]), vec![true]);
        let line = [Vec3::zeros(), Vec3::new(2.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0)];
        assert_eq!(hull_vertices(&line), vec![true, true, false]);
        let square = [
            Vec3::new(0.0, 0.0, 1.0),
            Vec3::new(1.0, 0.0, 1.0),
            Vec3::new(1.0, 1.0, 1.0),
            Vec3::new(0.0, 1.0, 1.0),
            Vec3::new(0.5, 0.5, 1.0),
            Vec3::new(0.5, 0.0, 1.0),
        ];
        assert_eq!(hull_vertices(&square), vec![true, true, true, true, false, false]);
    }
}
