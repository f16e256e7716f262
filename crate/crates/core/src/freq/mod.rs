//! Frequentist two-group analysis: Welch test, Welch power and sample size,
//! and OLS with HC3 sandwich intervals.

mod hc3;
mod power;
mod welch;

pub use hc3::{ols_classical_interval, ols_hc3_groups, ols_hc3_interval, OlsEstimate};
pub use power::{
    welch_power, welch_power_at, welch_sample_size, SampleSize, SampleSizeRequest, N_CAP,
};
pub use welch::{welch_test, TwoGroupData, WelchResult};
