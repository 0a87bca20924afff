//! Hand-eye calibration from point clouds of a robot base.
//!
//! Everything here is `no_std` + `alloc`: SE(3) algebra, point-cloud primitives, ICP
//! registration, hidden-point removal for synthetic views, base-pose estimation,
//! hand-eye solvers, evaluation metrics and least-squares surface fits. File formats
//! and the command-line tool live in the `basecal` crate.
#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod basepose;
pub mod cloud;
pub mod error;
pub mod evalharness;
pub mod geometry;
pub mod handeye;
pub mod hull;
pub mod kdtree;
pub mod metrics;
pub mod registration;
pub mod synth;

pub use cloud::{Aabb, PointCloud};
pub use error::{Error, Result};
pub use geometry::{EulerAngles, RigidTransform};
pub use kdtree::SpatialIndex;
