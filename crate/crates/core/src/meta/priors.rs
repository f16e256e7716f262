use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::stats::Distribution;

/// Priors of the meta-analysis model. The `tau` prior is truncated at zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSet {
    pub alpha: Distribution<f64>,
    pub beta_ovx: Distribution<f64>,
    pub beta_sham: Distribution<f64>,
    pub psi: Distribution<f64>,
    pub lambda_ovx: Distribution<f64>,
    pub lambda_sham: Distribution<f64>,
    pub tau: Distribution<f64>,
}

impl PriorSet {
    /// Weakly informative choices for log bone-volume data.
    pub fn manual() -> Self {
        PriorSet {
            alpha: Distribution::Normal { mean: 2.0, sd: 1.0 },
            beta_ovx: Distribution::Flat,
            beta_sham: Distribution::Flat,
            psi: Distribution::Normal { mean: 0.0, sd: 0.5 },
            lambda_ovx: Distribution::Flat,
            lambda_sham: Distribution::Flat,
            tau: Distribution::HalfNormal { scale: 0.5 },
        }
    }

    /// Wide defaults: Student t(3) on the intercepts and half-t(3) on `tau`.
    pub fn default_wide() -> Self {
        PriorSet {
            alpha: Distribution::StudentT { df: 3.0, location: 1.7, scale: 2.5 },
            beta_ovx: Distribution::Flat,
            beta_sham: Distribution::Flat,
            psi: Distribution::StudentT { df: 3.0, location: 0.0, scale: 2.5 },
            lambda_ovx: Distribution::Flat,
            lambda_sham: Distribution::Flat,
            tau: Distribution::StudentT { df: 3.0, location: 0.0, scale: 2.5 },
        }
    }

    pub fn validate(&self) -> Result<()> {
        for d in [
            &self.alpha,
            &self.beta_ovx,
            &self.beta_sham,
            &self.psi,
            &self.lambda_ovx,
            &self.lambda_sham,
            &self.tau,
        ] {
            d.validate()?;
        }
        Ok(())
    }
}

impl Default for PriorSet {
    fn default() -> Self {
        Self::manual()
    }
}
