//! Sensor-noise (PRNU) camera fingerprints and source attribution for
//! stabilized video.

// negated comparisons are how NaN is rejected in the validators
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod error;
mod fft2;
mod plane;

pub mod attribution;
pub mod correlation;
pub mod evaluation;
pub mod fingerprint;
pub mod geometry;
pub mod imaging;
pub mod optimizer;
pub mod registration;
pub mod synthcam;

pub use error::{Error, Result};
pub use plane::{mean_planes, pairwise_sum, sum_planes, ImagePlane, MIN_CORRELATION_SIDE};
