//! Parametric approximation of posterior draws (normal, location-scale t,
//! normal mixtures chosen by AIC) and the moment-based effective sample size
//! of the resulting prior.

mod mixture;
mod student;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use mixture::{fit_mixture_em, EmSettings, MAX_COMPONENTS, MIN_EM_DRAWS};
pub use student::fit_t_ml;

use crate::error::{Error, Result};
use crate::stats::{Distribution, DrawVector};

pub const MIN_FIT_DRAWS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitFamily {
    Normal,
    StudentT,
    NormalMixture,
}

/// A fitted parametric distribution with its likelihood and AIC.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParametricFit {
    pub family: FitFamily,
    pub distribution: Distribution<f64>,
    pub log_likelihood: f64,
    pub aic: f64,
    pub n_params: usize,
}

impl ParametricFit {
    pub fn new(
        distribution: Distribution<f64>,
        log_likelihood: f64,
        n_params: usize,
    ) -> Result<Self> {
        let family = match &distribution {
            Distribution::Normal { .. } => FitFamily::Normal,
            Distribution::StudentT { .. } => FitFamily::StudentT,
            Distribution::NormalMixture { .. } => FitFamily::NormalMixture,
            other => {
                return Err(Error::InvalidParameter(format!(
                    "{} is not a fit family",
                    other.family_name()
                )))
            }
        };
        distribution.validate()?;
        Ok(ParametricFit {
            family,
            distribution,
            log_likelihood,
            aic: 2.0 * n_params as f64 - 2.0 * log_likelihood,
            n_params,
        })
    }

    pub fn components(&self) -> usize {
        match &self.distribution {
            Distribution::NormalMixture { components } => components.len(),
            _ => 1,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let fit: ParametricFit = serde_json::from_str(s)?;
        fit.distribution.validate()?;
        Ok(fit)
    }
}

pub(crate) fn check_draws(draws: &DrawVector<f64>, needed: usize) -> Result<()> {
    if draws.len() < needed {
        return Err(Error::InsufficientDraws { needed, got: draws.len() });
    }
    Ok(())
}

pub(crate) fn ml_moments(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
    (m, v.sqrt())
}

/// ML moments, rejecting draws whose spread is rounding noise.
pub(crate) fn nondegenerate_moments(x: &[f64]) -> Result<(f64, f64)> {
    let (m, s) = ml_moments(x);
    if !(s > 1e-12 * m.abs().max(1.0)) {
        return Err(Error::DegenerateData("draws have zero variance".into()));
    }
    Ok((m, s))
}

pub(crate) fn normal_log_lik(x: &[f64], mean: f64, sd: f64) -> f64 {
    let n = x.len() as f64;
    let ss: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
    -0.5 * n * (2.0 * std::f64::consts::PI).ln() - n * sd.ln() - 0.5 * ss / (sd * sd)
}

/// Maximum-likelihood normal: sample mean and divisor-n standard deviation.
pub fn fit_normal_ml(draws: &DrawVector<f64>) -> Result<ParametricFit> {
    check_draws(draws, MIN_FIT_DRAWS)?;
    let (mean, sd) = nondegenerate_moments(draws.values())?;
    let ll = normal_log_lik(draws.values(), mean, sd);
    ParametricFit::new(Distribution::Normal { mean, sd }, ll, 2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EssMethod {
    Moment,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EssResult {
    pub n_eff: f64,
    /// `n_eff` rounded half up.
    pub n_eff_rounded: u64,
    pub reference_scale: f64,
    pub method: EssMethod,
}

/// Effective sample size `reference_scale^2 / Var(prior)`.
pub fn ess_moment(fit: &ParametricFit, reference_scale: f64) -> Result<EssResult> {
    ess_of(&fit.distribution, reference_scale)
}

pub fn ess_of(prior: &Distribution<f64>, reference_scale: f64) -> Result<EssResult> {
    if !(reference_scale > 0.0 && reference_scale.is_finite()) {
        return Err(Error::InvalidParameter("reference scale must be positive".into()));
    }
    let var = prior.variance()?;
    if !(var > 0.0 && var.is_finite()) {
        return Err(Error::InvalidParameter("prior variance must be positive and finite".into()));
    }
    let n_eff = reference_scale * reference_scale / var;
    Ok(EssResult {
        n_eff,
        n_eff_rounded: (n_eff + 0.5).floor() as u64,
        reference_scale,
        method: EssMethod::Moment,
    })
}

/// Named priors for the new experiment, as written by the MAP step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSpecFile {
    /// Fit used for the control-group mean.
    pub theta_c: ParametricFit,
    /// Fit used for the control-group log residual sd.
    pub log_sigma_c: ParametricFit,
    /// Fit of the residual sd on its natural scale, for reporting.
    pub sigma_c: ParametricFit,
    pub ess: EssResult,
}

impl PriorSpecFile {
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: PriorSpecFile = serde_json::from_str(&text)?;
        for f in [&spec.theta_c, &spec.log_sigma_c, &spec.sigma_c] {
            f.distribution.validate()?;
        }
        Ok(spec)
    }
}
