use rand::Rng;
use serde::{Deserialize, Serialize};

use super::NewExperimentPriors;
use crate::error::{Error, Result};
use crate::freq::TwoGroupData;
use crate::mcmc::{sample_stream, Cell, Coefficient, LinearGaussianModel, McmcFit, McmcSettings};
use crate::stats::summary::MIN_KDE_DRAWS;
use crate::stats::{quantile_sorted, silverman_bandwidth, Distribution, DrawVector};

pub const THETA_NAME: &str = "theta_c";
pub const DELTA_NAME: &str = "delta";
pub const PSI_NAME: &str = "psi";
pub const LAMBDA_NAME: &str = "lambda";

/// Distributional two-group model: mean `theta_C + delta 1(E)` and log sd
/// `psi + lambda 1(E)`.
pub fn two_group_model(
    data: &TwoGroupData<f64>,
    priors: &NewExperimentPriors,
) -> LinearGaussianModel {
    LinearGaussianModel {
        location: vec![
            Coefficient::free(THETA_NAME, priors.theta_c.clone()),
            Coefficient::free(DELTA_NAME, priors.delta.clone()),
        ],
        scale: vec![
            Coefficient::free(PSI_NAME, priors.psi.clone()),
            Coefficient::free(LAMBDA_NAME, priors.lambda.clone()),
        ],
        random: None,
        cells: vec![
            Cell::from_values(&data.y_c, vec![1.0, 0.0], vec![1.0, 0.0], None),
            Cell::from_values(&data.y_e, vec![1.0, 1.0], vec![1.0, 1.0], None),
        ],
    }
}

pub fn fit_bayes_two_group(
    data: &TwoGroupData<f64>,
    priors: &NewExperimentPriors,
    settings: &McmcSettings,
    design_id: u64,
    replicate_id: u64,
) -> Result<McmcFit> {
    priors.validate()?;
    sample_stream(&two_group_model(data, priors), settings, design_id, replicate_id)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BfSettings {
    /// Reported Bayes factors are clipped here.
    pub ceiling: f64,
    /// Bootstrap resamples for the Monte Carlo error; 0 disables it.
    pub bootstrap: usize,
    /// Posterior densities at the null below this count as zero.
    pub density_floor: f64,
}

impl Default for BfSettings {
    fn default() -> Self {
        BfSettings { ceiling: 1e4, bootstrap: 200, density_floor: 1e-12 }
    }
}

impl BfSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.ceiling > 1.0 && self.density_floor >= 0.0) {
            return Err(Error::Config("bf ceiling must exceed 1 and the floor be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BayesFactor {
    /// Clipped at the ceiling.
    pub bf10: f64,
    /// Unclipped ratio; infinite when the posterior density at the null is
    /// below the floor.
    pub raw: f64,
    /// Bootstrap standard deviation of the clipped estimate.
    pub mc_se: Option<f64>,
    /// Bootstrap 2.5% quantile of the clipped estimate.
    pub lower: Option<f64>,
}

impl BayesFactor {
    /// Posterior probability of the alternative at equal prior odds.
    pub fn post_model_prob(&self) -> f64 {
        self.bf10 / (1.0 + self.bf10)
    }

    pub fn post_model_prob_lower(&self) -> Option<f64> {
        self.lower.map(|b| b / (1.0 + b))
    }
}

/// Savage-Dickey ratio `p(delta = 0) / p(delta = 0 | y)` with a Gaussian KDE
/// of the posterior. Bootstrap resamples reuse the full-sample bandwidth, so
/// each resample only re-averages the kernel values at zero.
pub fn savage_dickey_bf10(
    draws: &DrawVector<f64>,
    prior: &Distribution<f64>,
    settings: &BfSettings,
    rng: &mut impl Rng,
) -> Result<BayesFactor> {
    settings.validate()?;
    if !prior.is_proper() {
        return Err(Error::InvalidParameter("Savage-Dickey needs a proper prior".into()));
    }
    let prior0 = prior.density(0.0)?;
    if !(prior0 > 0.0) {
        return Err(Error::InvalidParameter("prior density at the null is zero".into()));
    }
    let n = draws.len();
    if n < MIN_KDE_DRAWS {
        return Err(Error::InsufficientDraws { needed: MIN_KDE_DRAWS, got: n });
    }
    let h = silverman_bandwidth(draws)?;
    let norm = 1.0 / (h * std::f64::consts::TAU.sqrt());
    let kernel: Vec<f64> =
        draws.values().iter().map(|x| norm * (-0.5 * (x / h).powi(2)).exp()).collect();
    let ratio = |density: f64| {
        if density < settings.density_floor {
            f64::INFINITY
        } else {
            prior0 / density
        }
    };
    let raw = ratio(kernel.iter().sum::<f64>() / n as f64);
    let clip = |b: f64| b.min(settings.ceiling);

    let (mc_se, lower) = if settings.bootstrap > 1 {
        let mut boot: Vec<f64> = (0..settings.bootstrap)
            .map(|_| {
                let s: f64 = (0..n).map(|_| kernel[rng.random_range(0..n)]).sum();
                clip(ratio(s / n as f64))
            })
            .collect();
        let m = boot.iter().sum::<f64>() / boot.len() as f64;
        let var = boot.iter().map(|b| (b - m).powi(2)).sum::<f64>() / (boot.len() - 1) as f64;
        boot.sort_by(f64::total_cmp);
        (Some(var.sqrt()), Some(quantile_sorted(&boot, 0.025)))
    } else {
        (None, None)
    };
    Ok(BayesFactor { bf10: clip(raw), raw, mc_se, lower })
}
