//! Fitting an adult/child interpolated body model to 2D keypoint tracks
//! observed from a moving camera.

// `!(x > 0.0)` is used deliberately so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod body_model;
pub mod camera;
pub mod cli;
pub mod dataio;
pub mod error;
pub mod fitter;
pub mod metrics;
pub mod objective;
pub mod rotation;
pub mod toy;

pub use error::{Error, Result};
