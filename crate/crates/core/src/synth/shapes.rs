//! Procedural surface samplers used as reference models and evaluation targets.

use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::seeded_rng;
use crate::cloud::{Aabb, PointCloud};
use crate::geometry::Vec3;

/// Dimensions of the bundled base-like test shape, meters.
///
/// An upright cylinder standing on the origin (the frame of the first joint) with a
/// shoulder box on top that sticks out towards +Y. The box breaks the yaw symmetry of the
/// cylinder; the shape is mirror-symmetric about the YZ plane only.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BaseShape {
    pub radius: f64,
    pub height: f64,
    pub shoulder: Aabb,
}

impl Default for BaseShape {
    fn default() -> Self {
        Self {
            radius: 0.075,
            height: 0.12,
            shoulder: Aabb {
                min: Vec3::new(-0.045, -0.02, 0.12),
                max: Vec3::new(0.045, 0.13, 0.22),
            },
        }
    }
}

struct Patch {
    area: f64,
    sample: fn(&BaseShape, &mut ChaCha8Rng) -> Vec3,
    kind: PatchKind,
}

#[derive(Clone, Copy, PartialEq)]
enum PatchKind {
    CylinderSide,
    CylinderTop,
    Box,
    BoxBottom,
}

impl BaseShape {
    /// Area-weighted uniform surface sample with `n` points (the cylinder bottom, which
    /// sits on the mounting plate, is not sampled).
    pub fn sample(&self, n: usize, seed: u64) -> PointCloud {
        self.sample_parts(n, seed, true)
    }

    fn sample_parts(&self, n: usize, seed: u64, with_shoulder: bool) -> PointCloud {
        let mut rng = seeded_rng(seed);
        let b = self.shoulder;
        let e = b.extent();
        let mut patches = alloc::vec![
            Patch {
                area: 2.0 * core::f64::consts::PI * self.radius * self.height,
                sample: |s, r| {
                    let phi = r.random::<f64>() * 2.0 * core::f64::consts::PI;
                    let (sn, cs) = libm::sincos(phi);
                    Vec3::new(s.radius * cs, s.radius * sn, r.random::<f64>() * s.height)
                },
                kind: PatchKind::CylinderSide,
            },
            Patch {
                area: core::f64::consts::PI * self.radius * self.radius,
                sample: |s, r| {
                    let (x, y) = disk(r, s.radius);
                    Vec3::new(x, y, s.height)
                },
                kind: PatchKind::CylinderTop,
            },
        ];
        if with_shoulder {
            patches.extend([
                Patch {
                    area: e.x * e.y,
                    sample: |s, r| {
                        let b = s.shoulder;
                        Vec3::new(lerp(r, b.min.x, b.max.x), lerp(r, b.min.y, b.max.y), b.max.z)
                    },
                    kind: PatchKind::Box,
                },
                Patch {
                    area: e.x * e.y,
                    sample: |s, r| {
                        let b = s.shoulder;
                        Vec3::new(lerp(r, b.min.x, b.max.x), lerp(r, b.min.y, b.max.y), b.min.z)
                    },
                    kind: PatchKind::BoxBottom,
                },
                Patch {
                    area: 2.0 * e.y * e.z,
                    sample: |s, r| {
                        let b = s.shoulder;
                        let x = if r.random::<bool>() { b.min.x } else { b.max.x };
                        Vec3::new(x, lerp(r, b.min.y, b.max.y), lerp(r, b.min.z, b.max.z))
                    },
                    kind: PatchKind::Box,
                },
                Patch {
                    area: 2.0 * e.x * e.z,
                    sample: |s, r| {
                        let b = s.shoulder;
                        let y = if r.random::<bool>() { b.min.y } else { b.max.y };
                        Vec3::new(lerp(r, b.min.x, b.max.x), y, lerp(r, b.min.z, b.max.z))
                    },
                    kind: PatchKind::Box,
                },
            ]);
        }
        let total: f64 = patches.iter().map(|p| p.area).sum();
        let mut points = Vec::with_capacity(n);
        while points.len() < n {
            let mut pick = rng.random::<f64>() * total;
            let patch = patches
                .iter()
                .find(|p| {
                    pick -= p.area;
                    pick <= 0.0
                })
                .unwrap_or(&patches[patches.len() - 1]);
            let p = (patch.sample)(self, &mut rng);
            let hidden = with_shoulder
                && match patch.kind {
                    // Cap under the shoulder and shoulder floor over the cap are internal.
                    PatchKind::CylinderTop => b.contains(&p),
                    PatchKind::BoxBottom => p.x * p.x + p.y * p.y <= self.radius * self.radius,
                    _ => false,
                };
            if !hidden {
                points.push(p);
            }
        }
        PointCloud::new(points).with_label("base")
    }
}

/// The bundled reference model: [`BaseShape::default`] sampled with `n` points.
pub fn base_model(n: usize, seed: u64) -> PointCloud {
    BaseShape::default().sample(n, seed)
}

/// The base cylinder alone; yaw-symmetric by construction.
pub fn cylinder_model(n: usize, seed: u64) -> PointCloud {
    BaseShape::default().sample_parts(n, seed, false)
}

/// Uniform samples on the square `[-half, half]²` of the plane `z = 0`.
pub fn plane_patch(n: usize, half: f64, seed: u64) -> PointCloud {
    let mut rng = seeded_rng(seed);
    (0..n)
        .map(|_| Vec3::new(lerp(&mut rng, -half, half), lerp(&mut rng, -half, half), 0.0))
        .collect()
}

/// Uniform samples on the upper hemisphere (`z >= center.z`) of a sphere.
pub fn hemisphere(n: usize, center: Vec3, radius: f64, seed: u64) -> PointCloud {
    let mut rng = seeded_rng(seed);
    (0..n)
        .map(|_| {
            // Archimedes: z uniform on [0, r] gives uniform area on the cap.
            let z: f64 = rng.random();
            let phi = rng.random::<f64>() * 2.0 * core::f64::consts::PI;
            let rho = libm::sqrt((1.0 - z * z).max(0.0));
            let (s, c) = libm::sincos(phi);
            center + Vec3::new(rho * c, rho * s, z) * radius
        })
        .collect()
}

fn lerp(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

fn disk(rng: &mut ChaCha8Rng, radius: f64) -> (f64, f64) {
    let r = radius * libm::sqrt(rng.random::<f64>());
    let phi = rng.random::<f64>() * 2.0 * core::f64::consts::PI;
    let (s, c) = libm::sincos(phi);
    (r * c, r * s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn base_model_is_deterministic_and_on_surface() {
        let a = base_model(3000, 5);
        assert_eq!(a, base_model(3000, 5));
        assert_ne!(a, base_model(3000, 6));
        assert_eq!(a.len(), 3000);
        let shape = BaseShape::default();
        for p in a.iter() {
            let r = (p.x * p.x + p.y * p.y).sqrt();
            let on_cylinder = (r - shape.radius).abs() < 1e-12 && p.z <= shape.height
                || (p.z - shape.height).abs() < 1e-12 && r <= shape.radius;
            let on_box = shape.shoulder.contains(p);
            assert!(on_cylinder || on_box);
        }
    }

    #[test]
    fn hemisphere_points_on_sphere() {
        let c = Vec3::new(0.1, 0.2, 0.3);
        for p in hemisphere(500, c, 0.075, 1).iter() {
            assert!(((p - c).norm() - 0.075).abs() < 1e-12);
            assert!(p.z >= c.z);
        }
    }
}
