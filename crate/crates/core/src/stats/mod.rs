//! Distributions, special functions, posterior-draw summaries and seeded random streams.

pub mod dist;
pub mod noncentral_t;
pub mod rng;
pub mod special;
pub mod summary;

pub use dist::{Distribution, MixtureComponent};
pub use rng::{Purpose, RngStream, StreamId};
pub use summary::{
    hdi, kde_density_at, quantile, quantile_interval, quantile_sorted, silverman_bandwidth,
    DrawVector, IntervalEstimate, IntervalKind,
};
