//! Distributional normal-normal hierarchical meta-analysis of historical
//! experiments: strain random intercepts, operation-group fixed effects on the
//! mean and on the log residual sd.

mod data;
mod predictive;
mod priors;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

pub use data::{CellStats, HistoricalDataset, Op, Row};
pub use predictive::{posterior_predictive, prior_predictive, PRIOR_PREDICTIVE_STRAINS};
pub use priors::PriorSet;

use crate::error::Result;
use crate::mcmc::{
    random_effects_ln_density, sample_stream, Cell, Coefficient, LinearGaussianModel, McmcFit,
    McmcSettings, PosteriorDraws, RandomIntercept, Term,
};
use crate::stats::{quantile_interval, DrawVector};

pub const TAU_NAME: &str = "tau_strain";
pub const EFFECT_PREFIX: &str = "nu";

/// Manual priors and an estimated heterogeneity sd by default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetaModelSpec {
    pub priors: PriorSet,
    /// Holds the strain heterogeneity sd at a known value instead of estimating it.
    #[serde(default)]
    pub tau_fixed: Option<f64>,
}

pub fn beta_name(op: Op) -> String {
    format!("beta_{}", op.key())
}

pub fn lambda_name(op: Op) -> String {
    format!("lambda_{}", op.key())
}

pub fn effect_name(strain: &str) -> String {
    format!("{EFFECT_PREFIX}[{strain}]")
}

/// Parameter values of the meta-analysis model; `nu` follows `dataset.strains()`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaParams {
    pub alpha: f64,
    pub beta_ovx: f64,
    pub beta_sham: f64,
    pub psi: f64,
    pub lambda_ovx: f64,
    pub lambda_sham: f64,
    pub tau: f64,
    pub nu: Vec<f64>,
}

impl MetaParams {
    pub fn mean(&self, op: Op, strain_effect: f64) -> f64 {
        self.alpha
            + strain_effect
            + match op {
                Op::None => 0.0,
                Op::Ovx => self.beta_ovx,
                Op::Sham => self.beta_sham,
            }
    }

    pub fn log_sigma(&self, op: Op) -> f64 {
        self.psi
            + match op {
                Op::None => 0.0,
                Op::Ovx => self.lambda_ovx,
                Op::Sham => self.lambda_sham,
            }
    }
}

fn ln_normal(y: f64, mu: f64, sigma: f64) -> f64 {
    -0.5 * (2.0 * PI).ln() - sigma.ln() - 0.5 * ((y - mu) / sigma).powi(2)
}

/// Unnormalized log posterior evaluated row by row: individual rows through the
/// normal density, summary rows through their sufficient statistics.
pub fn log_posterior(spec: &MetaModelSpec, data: &HistoricalDataset, p: &MetaParams) -> f64 {
    let strains = data.strains();
    if p.nu.len() != strains.len() || !(p.tau >= 0.0) {
        return f64::NEG_INFINITY;
    }
    let level = |s: &str| strains.binary_search_by(|x| x.as_str().cmp(s)).expect("known strain");
    let mut lp = 0.0;
    for row in data.rows() {
        let (_, strain, op) = row.key();
        let mu = p.mean(op, p.nu[level(strain)]);
        let sigma = p.log_sigma(op).exp();
        lp += match row {
            Row::Individual { y, .. } => ln_normal(*y, mu, sigma),
            Row::Summary { n, mean, sd, .. } => {
                let n = *n as f64;
                let sse = (n - 1.0) * sd * sd + n * (mean - mu).powi(2);
                -0.5 * n * (2.0 * PI).ln() - n * sigma.ln() - 0.5 * sse / (sigma * sigma)
            }
        };
    }
    let pr = &spec.priors;
    lp += pr.alpha.ln_prior(p.alpha)
        + pr.beta_ovx.ln_prior(p.beta_ovx)
        + pr.beta_sham.ln_prior(p.beta_sham)
        + pr.psi.ln_prior(p.psi)
        + pr.lambda_ovx.ln_prior(p.lambda_ovx)
        + pr.lambda_sham.ln_prior(p.lambda_sham);
    match spec.tau_fixed {
        Some(t) if t != p.tau => return f64::NEG_INFINITY,
        Some(_) => {}
        None => lp += pr.tau.ln_prior(p.tau),
    }
    lp += random_effects_ln_density(&p.nu, p.tau);
    if lp.is_nan() {
        f64::NEG_INFINITY
    } else {
        lp
    }
}

/// Translates the dataset and priors into the sampler's cell model. Operation
/// coefficients are included only for groups present in the data.
pub fn build_model(spec: &MetaModelSpec, data: &HistoricalDataset) -> Result<LinearGaussianModel> {
    spec.priors.validate()?;
    let ops = data.ops();
    let pr = &spec.priors;
    let treated: Vec<Op> = [Op::Ovx, Op::Sham].into_iter().filter(|o| ops.contains(o)).collect();
    let mut location = vec![Coefficient::free("alpha", pr.alpha.clone())];
    let mut scale = vec![Coefficient::free("psi", pr.psi.clone())];
    for &op in &treated {
        let (b, l) = match op {
            Op::Ovx => (&pr.beta_ovx, &pr.lambda_ovx),
            _ => (&pr.beta_sham, &pr.lambda_sham),
        };
        location.push(Coefficient::free(beta_name(op), b.clone()));
        scale.push(Coefficient::free(lambda_name(op), l.clone()));
    }
    let strains = data.strains();
    let cells = data
        .cells()
        .into_iter()
        .map(|c| {
            let mut row = vec![1.0];
            row.extend(treated.iter().map(|&o| if o == c.op { 1.0 } else { 0.0 }));
            let level = strains.binary_search(&c.strain).expect("strain listed");
            Cell {
                n: c.n,
                mean: c.mean,
                sse: c.sse,
                loc: row.clone(),
                scale: row,
                level: Some(level),
            }
        })
        .collect();
    let tau = match spec.tau_fixed {
        Some(t) => Term::Fixed(t),
        None => Term::Free(pr.tau.clone()),
    };
    Ok(LinearGaussianModel {
        location,
        scale,
        random: Some(RandomIntercept {
            tau_name: TAU_NAME.into(),
            effect_prefix: EFFECT_PREFIX.into(),
            levels: strains,
            tau,
        }),
        cells,
    })
}

/// Fits the meta-analysis model. The fit carries a convergence status that
/// callers must inspect.
pub fn sample_posterior(
    spec: &MetaModelSpec,
    data: &HistoricalDataset,
    settings: &McmcSettings,
) -> Result<McmcFit> {
    let model = build_model(spec, data)?;
    sample_stream(&model, settings, 0, 0).map_err(|e| e.in_module("meta-fit"))
}

fn op_columns(op: Op) -> (Option<String>, Option<String>) {
    match op {
        Op::None => (None, None),
        o => (Some(beta_name(o)), Some(lambda_name(o))),
    }
}

/// Population-level expected value `alpha + beta_op` per draw, without strain effects.
pub fn posterior_epred(draws: &PosteriorDraws, op: Op) -> Result<DrawVector<f64>> {
    match op_columns(op).0 {
        None => draws.get("alpha"),
        Some(b) => draws.derive(&["alpha", &b], |v| v[0] + v[1]),
    }
}

/// Residual sd `exp(psi + lambda_op)` per draw.
pub fn posterior_sigma(draws: &PosteriorDraws, op: Op) -> Result<DrawVector<f64>> {
    match op_columns(op).1 {
        None => draws.derive(&["psi"], |v| v[0].exp()),
        Some(l) => draws.derive(&["psi", &l], |v| (v[0] + v[1]).exp()),
    }
}

/// Posterior summary of one quantity with a 95% equal-tailed interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectSummary {
    pub parameter: String,
    pub mean: f64,
    pub sd: f64,
    pub lower: f64,
    pub upper: f64,
}

impl EffectSummary {
    pub fn from_draws(parameter: impl Into<String>, d: &DrawVector<f64>) -> Result<Self> {
        let ci = quantile_interval(d, 0.95)?;
        Ok(EffectSummary {
            parameter: parameter.into(),
            mean: d.mean(),
            sd: d.sd(),
            lower: ci.lower,
            upper: ci.upper,
        })
    }
}

/// Population effects: intercept, group contrasts, heterogeneity sd and
/// residual sd per operation group.
pub fn population_summary(draws: &PosteriorDraws) -> Result<Vec<EffectSummary>> {
    let mut out = vec![EffectSummary::from_draws("alpha", &draws.get("alpha")?)?];
    for op in [Op::Ovx, Op::Sham] {
        if let Ok(d) = draws.get(&beta_name(op)) {
            out.push(EffectSummary::from_draws(beta_name(op), &d)?);
        }
    }
    out.push(EffectSummary::from_draws(TAU_NAME, &draws.get(TAU_NAME)?)?);
    for op in Op::ALL {
        if let Ok(d) = posterior_sigma(draws, op) {
            out.push(EffectSummary::from_draws(format!("sigma_{}", op.key()), &d)?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShrinkageRow {
    pub strain: String,
    pub op: Op,
    pub n: usize,
    pub observed_mean: f64,
    pub posterior_mean: f64,
    pub lower80: f64,
    pub upper80: f64,
    pub lower95: f64,
    pub upper95: f64,
    /// Posterior mean of the population-level mean of the cell's group.
    pub pooled_mean: f64,
}

/// Strain-level posterior means `alpha + beta_op + nu_j` next to the observed
/// means and the pooled group mean, one row per (strain, op) cell.
pub fn shrinkage_table(
    draws: &PosteriorDraws,
    data: &HistoricalDataset,
) -> Result<Vec<ShrinkageRow>> {
    let mut rows = vec![];
    let mut cells = data.cells();
    cells.sort_by(|a, b| (a.op, &a.strain).cmp(&(b.op, &b.strain)));
    for c in cells {
        let pooled = posterior_epred(draws, c.op)?;
        let nu = draws.values(&effect_name(&c.strain))?;
        let strain_mean =
            DrawVector::new(pooled.values().iter().zip(nu).map(|(p, v)| p + v).collect())?;
        let i80 = quantile_interval(&strain_mean, 0.8)?;
        let i95 = quantile_interval(&strain_mean, 0.95)?;
        rows.push(ShrinkageRow {
            strain: c.strain,
            op: c.op,
            n: c.n,
            observed_mean: c.mean,
            posterior_mean: strain_mean.mean(),
            lower80: i80.lower,
            upper80: i80.upper,
            lower95: i95.lower,
            upper95: i95.upper,
            pooled_mean: pooled.mean(),
        });
    }
    Ok(rows)
}

/// Maps a flat draw row (in `PosteriorDraws` order) back to named parameters.
pub fn params_at(draws: &PosteriorDraws, data: &HistoricalDataset, i: usize) -> Result<MetaParams> {
    let get = |name: &str| -> Result<f64> { Ok(draws.values(name)?[i]) };
    let opt = |name: String| draws.values(&name).map(|v| v[i]).unwrap_or(0.0);
    Ok(MetaParams {
        alpha: get("alpha")?,
        beta_ovx: opt(beta_name(Op::Ovx)),
        beta_sham: opt(beta_name(Op::Sham)),
        psi: get("psi")?,
        lambda_ovx: opt(lambda_name(Op::Ovx)),
        lambda_sham: opt(lambda_name(Op::Sham)),
        tau: get(TAU_NAME)?,
        nu: data.strains().iter().map(|s| get(&effect_name(s))).collect::<Result<_>>()?,
    })
}
