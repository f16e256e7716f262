use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::stats::Distribution;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// A model coefficient is either estimated under a prior or held at a known value.
#[derive(Debug, Clone, PartialEq)]
pub enum Term {
    Free(Distribution<f64>),
    Fixed(f64),
}

impl Term {
    pub fn is_free(&self) -> bool {
        matches!(self, Term::Free(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Coefficient {
    pub name: String,
    pub term: Term,
}

impl Coefficient {
    pub fn free(name: impl Into<String>, prior: Distribution<f64>) -> Self {
        Coefficient { name: name.into(), term: Term::Free(prior) }
    }

    pub fn fixed(name: impl Into<String>, value: f64) -> Self {
        Coefficient { name: name.into(), term: Term::Fixed(value) }
    }
}

/// Exchangeable intercepts `nu_j ~ N(0, tau^2)` shared by all cells of a level.
///
/// A prior on `tau` is read as truncated to `[0, inf)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomIntercept {
    pub tau_name: String,
    pub effect_prefix: String,
    pub levels: Vec<String>,
    pub tau: Term,
}

impl RandomIntercept {
    pub fn effect_name(&self, level: usize) -> String {
        format!("{}[{}]", self.effect_prefix, self.levels[level])
    }
}

/// Sufficient statistics of observations sharing one location and one scale predictor.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub n: usize,
    pub mean: f64,
    /// Sum of squared deviations from `mean`.
    pub sse: f64,
    pub loc: Vec<f64>,
    pub scale: Vec<f64>,
    pub level: Option<usize>,
}

impl Cell {
    pub fn from_values(
        values: &[f64],
        loc: Vec<f64>,
        scale: Vec<f64>,
        level: Option<usize>,
    ) -> Self {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let sse = values.iter().map(|y| (y - mean).powi(2)).sum();
        Cell { n, mean, sse, loc, scale, level }
    }

    /// Log-likelihood of the cell's observations under `N(mu, exp(s)^2)`.
    pub fn log_lik(&self, mu: f64, s: f64) -> f64 {
        let n = self.n as f64;
        let q = self.sse + n * (self.mean - mu).powi(2);
        -0.5 * n * LN_2PI - n * s - 0.5 * q * (-2.0 * s).exp()
    }
}

/// Normal regression with a log-linear residual scale and an optional random intercept.
///
/// Cell `c` has mean `loc_c . beta + nu_level(c)` and residual sd `exp(scale_c . gamma)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearGaussianModel {
    pub location: Vec<Coefficient>,
    pub scale: Vec<Coefficient>,
    pub random: Option<RandomIntercept>,
    pub cells: Vec<Cell>,
}

/// A point in parameter space. Fixed terms carry their fixed value.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub loc: Vec<f64>,
    pub scale: Vec<f64>,
    pub nu: Vec<f64>,
    pub tau: f64,
}

impl LinearGaussianModel {
    pub fn validate(&self) -> Result<()> {
        if self.cells.is_empty() {
            return Err(Error::Validation("model has no data cells".into()));
        }
        let (p, q) = (self.location.len(), self.scale.len());
        let levels = self.random.as_ref().map_or(0, |r| r.levels.len());
        for (i, c) in self.cells.iter().enumerate() {
            if c.n == 0 || c.loc.len() != p || c.scale.len() != q {
                return Err(Error::Validation(format!("cell {i} has a malformed design row")));
            }
            if !(c.mean.is_finite() && c.sse.is_finite() && c.sse >= 0.0) {
                return Err(Error::Validation(format!("cell {i} has non-finite statistics")));
            }
            match (c.level, self.random.is_some()) {
                (Some(l), true) if l < levels => {}
                (None, false) => {}
                _ => return Err(Error::Validation(format!("cell {i} has an invalid level index"))),
            }
        }
        for coef in self.location.iter().chain(&self.scale) {
            if let Term::Free(d) = &coef.term {
                d.validate()?;
            }
        }
        if let Some(r) = &self.random {
            match &r.tau {
                Term::Fixed(t) if !(*t >= 0.0 && t.is_finite()) => {
                    return Err(Error::InvalidParameter(format!("{} must be >= 0", r.tau_name)))
                }
                Term::Free(d) => d.validate()?,
                _ => {}
            }
        }
        Ok(())
    }

    /// Parameter names in draw order: location, scale, heterogeneity sd, effects.
    pub fn parameter_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.location.iter().map(|c| c.name.clone()).collect();
        names.extend(self.scale.iter().map(|c| c.name.clone()));
        if let Some(r) = &self.random {
            names.push(r.tau_name.clone());
            names.extend((0..r.levels.len()).map(|j| r.effect_name(j)));
        }
        names
    }

    pub fn flatten(&self, s: &State) -> Vec<f64> {
        let mut v = s.loc.clone();
        v.extend_from_slice(&s.scale);
        if self.random.is_some() {
            v.push(s.tau);
            v.extend_from_slice(&s.nu);
        }
        v
    }

    pub fn cell_mean(&self, cell: &Cell, s: &State) -> f64 {
        let mut mu = dot(&cell.loc, &s.loc);
        if let Some(l) = cell.level {
            mu += s.nu[l];
        }
        mu
    }

    pub fn log_likelihood(&self, s: &State) -> f64 {
        self.cells.iter().map(|c| c.log_lik(self.cell_mean(c, s), dot(&c.scale, &s.scale))).sum()
    }

    /// Unnormalized log posterior; `-inf` outside the support or on numerical failure.
    pub fn log_posterior(&self, s: &State) -> f64 {
        let mut lp = self.log_likelihood(s);
        for (coef, &v) in self.location.iter().zip(&s.loc).chain(self.scale.iter().zip(&s.scale)) {
            match &coef.term {
                Term::Free(d) => lp += d.ln_prior(v),
                Term::Fixed(x) if *x != v => return f64::NEG_INFINITY,
                Term::Fixed(_) => {}
            }
        }
        if let Some(r) = &self.random {
            lp += match &r.tau {
                Term::Free(d) if s.tau >= 0.0 => d.ln_prior(s.tau),
                Term::Fixed(t) if *t == s.tau => 0.0,
                _ => return f64::NEG_INFINITY,
            };
            lp += random_effects_ln_density(&s.nu, s.tau);
        }
        if lp.is_nan() {
            f64::NEG_INFINITY
        } else {
            lp
        }
    }
}

/// `sum_j ln N(nu_j | 0, tau^2)`; at `tau = 0` all effects must vanish.
pub fn random_effects_ln_density(nu: &[f64], tau: f64) -> f64 {
    if tau > 0.0 {
        let ss: f64 = nu.iter().map(|v| v * v).sum();
        -(nu.len() as f64) * (tau.ln() + 0.5 * (2.0 * PI).ln()) - 0.5 * ss / (tau * tau)
    } else if tau == 0.0 && nu.iter().all(|&v| v == 0.0) {
        0.0
    } else {
        f64::NEG_INFINITY
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
