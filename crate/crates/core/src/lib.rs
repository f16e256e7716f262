//! Meta-analytic predictive priors and simulation-based design analysis for
//! small two-group experiments.
//!
//! The numerical kernels in [`stats`] and [`freq`] are generic over the
//! floating point type; the sampling, fitting and design layers work in `f64`.
//! The aliases below fix the scalar for the common case.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checks;
pub mod design;
pub mod error;
pub mod freq;
pub mod io;
pub mod map;
pub mod mcmc;
pub mod meta;
pub mod scalar;
pub mod stats;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Distribution = stats::Distribution<f64>;
pub type MixtureComponent = stats::MixtureComponent<f64>;
pub type DrawVector = stats::DrawVector<f64>;
pub type IntervalEstimate = stats::IntervalEstimate<f64>;
pub type TwoGroupData = freq::TwoGroupData<f64>;
pub type WelchResult = freq::WelchResult<f64>;
pub type SampleSizeRequest = freq::SampleSizeRequest<f64>;
