//! Ambient-anchor phase calibration for FMCW radar arrays: echo synthesis,
//! spatial-spectrum template matching, anchor ranking and phase-error
//! estimation.

// `!(x > 0.0)` is used on purpose so NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibrator;
pub mod config;
pub mod detector;
pub mod error;
pub mod geometry;
pub mod io;
pub mod model;
pub mod pipeline;
pub mod ranker;
pub mod spectrum;
pub mod templates;

pub use error::{Error, Result};
pub use geometry::{Box3, Point3};
