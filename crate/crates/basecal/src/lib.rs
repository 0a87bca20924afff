//! File formats, dataset writing, calibration workflows and the command line on top of
//! `basecal-core`.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod formats;
pub mod io;
pub mod workflow;

pub use config::SessionConfig;
pub use error::{Error, Result};
