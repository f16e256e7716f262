use rand::Rng;
use rand_distr::{ChiSquared, Distribution as _, StandardNormal};
use serde::{Deserialize, Serialize};

use super::noncentral_t;
use super::special::{beta_inc, brent, ln_gamma, norm_cdf, norm_pdf, norm_quantile, norm_sf};
use crate::error::{Error, Result};
use crate::scalar::{c, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent<F> {
    pub weight: F,
    pub mean: F,
    pub sd: F,
}

/// Parametric families used for priors, likelihood pieces and MAP approximations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Distribution<F> {
    Normal {
        mean: F,
        sd: F,
    },
    HalfNormal {
        scale: F,
    },
    /// Location-scale Student t.
    StudentT {
        df: F,
        location: F,
        scale: F,
    },
    NoncentralT {
        df: F,
        ncp: F,
    },
    NormalMixture {
        components: Vec<MixtureComponent<F>>,
    },
    /// Improper uniform over the real line; usable only as a prior.
    Flat,
}

fn positive<F: Scalar>(name: &str, v: F) -> Result<()> {
    if v > F::zero() && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {v}")))
    }
}

fn finite<F: Scalar>(name: &str, v: F) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be finite")))
    }
}

fn t_cdf_std<F: Scalar>(z: F, df: F) -> F {
    let x = df / (df + z * z);
    let tail = c::<F>(0.5) * beta_inc(df * c(0.5), c(0.5), x);
    if z > F::zero() {
        F::one() - tail
    } else {
        tail
    }
}

fn t_ln_pdf_std<F: Scalar>(z: F, df: F) -> F {
    let half = c::<F>(0.5);
    ln_gamma((df + F::one()) * half)
        - ln_gamma(df * half)
        - half * (df * F::PI()).ln()
        - (df + F::one()) * half * (F::one() + z * z / df).ln()
}

impl<F: Scalar> Distribution<F> {
    pub fn normal(mean: F, sd: F) -> Result<Self> {
        let d = Distribution::Normal { mean, sd };
        d.validate()?;
        Ok(d)
    }

    pub fn half_normal(scale: F) -> Result<Self> {
        let d = Distribution::HalfNormal { scale };
        d.validate()?;
        Ok(d)
    }

    pub fn student_t(df: F, location: F, scale: F) -> Result<Self> {
        let d = Distribution::StudentT { df, location, scale };
        d.validate()?;
        Ok(d)
    }

    pub fn noncentral_t(df: F, ncp: F) -> Result<Self> {
        let d = Distribution::NoncentralT { df, ncp };
        d.validate()?;
        Ok(d)
    }

    pub fn mixture(components: Vec<MixtureComponent<F>>) -> Result<Self> {
        let d = Distribution::NormalMixture { components };
        d.validate()?;
        Ok(d)
    }

    /// Checks the family invariants; deserialized values should pass through here.
    pub fn validate(&self) -> Result<()> {
        match self {
            Distribution::Normal { mean, sd } => {
                finite("mean", *mean)?;
                positive("sd", *sd)
            }
            Distribution::HalfNormal { scale } => positive("scale", *scale),
            Distribution::StudentT { df, location, scale } => {
                positive("df", *df)?;
                finite("location", *location)?;
                positive("scale", *scale)
            }
            Distribution::NoncentralT { df, ncp } => {
                positive("df", *df)?;
                finite("ncp", *ncp)
            }
            Distribution::NormalMixture { components } => {
                if components.is_empty() {
                    return Err(Error::InvalidParameter("mixture needs a component".into()));
                }
                let mut total = F::zero();
                for comp in components {
                    if !(comp.weight >= F::zero()) {
                        return Err(Error::InvalidParameter("mixture weight negative".into()));
                    }
                    finite("component mean", comp.mean)?;
                    positive("component sd", comp.sd)?;
                    total = total + comp.weight;
                }
                let tol = c::<F>(1e-12).max(F::epsilon() * c(16.0));
                if (total - F::one()).abs() > tol {
                    return Err(Error::InvalidParameter(format!(
                        "mixture weights sum to {total}, not 1"
                    )));
                }
                Ok(())
            }
            Distribution::Flat => Ok(()),
        }
    }

    pub fn is_proper(&self) -> bool {
        !matches!(self, Distribution::Flat)
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            Distribution::Normal { .. } => "normal",
            Distribution::HalfNormal { .. } => "half_normal",
            Distribution::StudentT { .. } => "student_t",
            Distribution::NoncentralT { .. } => "noncentral_t",
            Distribution::NormalMixture { .. } => "normal_mixture",
            Distribution::Flat => "flat",
        }
    }

    pub fn density(&self, x: F) -> Result<F> {
        if !x.is_finite() {
            return Err(Error::InvalidParameter("density argument must be finite".into()));
        }
        Ok(match self {
            Distribution::Normal { mean, sd } => norm_pdf((x - *mean) / *sd) / *sd,
            Distribution::HalfNormal { scale } => {
                if x < F::zero() {
                    F::zero()
                } else {
                    c::<F>(2.0) * norm_pdf(x / *scale) / *scale
                }
            }
            Distribution::StudentT { df, location, scale } => {
                t_ln_pdf_std((x - *location) / *scale, *df).exp() / *scale
            }
            Distribution::NoncentralT { df, ncp } => nct_pdf(x, *df, *ncp),
            Distribution::NormalMixture { components } => components
                .iter()
                .fold(F::zero(), |acc, k| acc + k.weight * norm_pdf((x - k.mean) / k.sd) / k.sd),
            Distribution::Flat => return Err(Error::ImproperDensity),
        })
    }

    pub fn ln_density(&self, x: F) -> Result<F> {
        match self {
            Distribution::Normal { mean, sd } => {
                let z = (x - *mean) / *sd;
                Ok(-c::<F>(0.5) * z * z - sd.ln() - c::<F>(0.5) * F::TAU().ln())
            }
            Distribution::StudentT { df, location, scale } => {
                Ok(t_ln_pdf_std((x - *location) / *scale, *df) - scale.ln())
            }
            _ => self.density(x).map(|d| d.ln()),
        }
    }

    /// Log prior density up to a constant: flat priors contribute zero.
    pub fn ln_prior(&self, x: F) -> F {
        match self {
            Distribution::Flat => F::zero(),
            d => d.ln_density(x).unwrap_or(F::neg_infinity()),
        }
    }

    pub fn cdf(&self, x: F) -> Result<F> {
        Ok(match self {
            Distribution::Normal { mean, sd } => norm_cdf((x - *mean) / *sd),
            Distribution::HalfNormal { scale } => {
                if x <= F::zero() {
                    F::zero()
                } else {
                    F::one() - c::<F>(2.0) * norm_sf(x / *scale)
                }
            }
            Distribution::StudentT { df, location, scale } => {
                t_cdf_std((x - *location) / *scale, *df)
            }
            Distribution::NoncentralT { df, ncp } => noncentral_t::cdf(x, *df, *ncp),
            Distribution::NormalMixture { components } => components
                .iter()
                .fold(F::zero(), |acc, k| acc + k.weight * norm_cdf((x - k.mean) / k.sd)),
            Distribution::Flat => return Err(Error::ImproperDensity),
        })
    }

    pub fn quantile(&self, p: F) -> Result<F> {
        if !(p > F::zero() && p < F::one()) {
            return Err(Error::InvalidParameter(format!("probability {p} outside (0, 1)")));
        }
        match self {
            Distribution::Normal { mean, sd } => Ok(*mean + *sd * norm_quantile(p)),
            Distribution::HalfNormal { scale } => {
                Ok(*scale * norm_quantile((F::one() + p) * c(0.5)))
            }
            Distribution::Flat => Err(Error::ImproperDensity),
            _ => {
                let (guess, spread) = self.bracket_hint();
                invert_cdf(|x| self.cdf(x).unwrap_or(F::nan()), p, guess, spread)
            }
        }
    }

    fn bracket_hint(&self) -> (F, F) {
        match self {
            Distribution::StudentT { location, scale, .. } => (*location, *scale),
            Distribution::NoncentralT { ncp, .. } => (*ncp, F::one()),
            Distribution::NormalMixture { components } => {
                let m = components.iter().fold(F::zero(), |a, k| a + k.weight * k.mean);
                let s = components.iter().fold(F::zero(), |a, k| a.max(k.sd));
                (m, s)
            }
            Distribution::Normal { mean, sd } => (*mean, *sd),
            Distribution::HalfNormal { scale } => (*scale, *scale),
            Distribution::Flat => (F::zero(), F::one()),
        }
    }

    pub fn mean(&self) -> Result<F> {
        match self {
            Distribution::Normal { mean, .. } => Ok(*mean),
            Distribution::HalfNormal { scale } => Ok(*scale * (c::<F>(2.0) / F::PI()).sqrt()),
            Distribution::StudentT { df, location, .. } => {
                if *df > F::one() {
                    Ok(*location)
                } else {
                    Err(Error::InvalidParameter("t mean undefined for df <= 1".into()))
                }
            }
            Distribution::NoncentralT { df, ncp } => {
                if *df > F::one() {
                    let half = c::<F>(0.5);
                    Ok(*ncp
                        * (*df * half).sqrt()
                        * (ln_gamma((*df - F::one()) * half) - ln_gamma(*df * half)).exp())
                } else {
                    Err(Error::InvalidParameter("noncentral t mean undefined for df <= 1".into()))
                }
            }
            Distribution::NormalMixture { components } => {
                Ok(components.iter().fold(F::zero(), |a, k| a + k.weight * k.mean))
            }
            Distribution::Flat => Err(Error::ImproperDensity),
        }
    }

    pub fn variance(&self) -> Result<F> {
        match self {
            Distribution::Normal { sd, .. } => Ok(*sd * *sd),
            Distribution::HalfNormal { scale } => {
                Ok(*scale * *scale * (F::one() - c::<F>(2.0) / F::PI()))
            }
            Distribution::StudentT { df, scale, .. } => {
                if *df > c(2.0) {
                    Ok(*scale * *scale * *df / (*df - c(2.0)))
                } else {
                    Err(Error::InvalidParameter("t variance is infinite for df <= 2".into()))
                }
            }
            Distribution::NoncentralT { df, ncp } => {
                if *df > c(2.0) {
                    let m = self.mean()?;
                    Ok(*df * (F::one() + *ncp * *ncp) / (*df - c(2.0)) - m * m)
                } else {
                    Err(Error::InvalidParameter(
                        "noncentral t variance is infinite for df <= 2".into(),
                    ))
                }
            }
            Distribution::NormalMixture { components } => {
                let m = self.mean()?;
                Ok(components.iter().fold(F::zero(), |a, k| {
                    a + k.weight * (k.sd * k.sd + (k.mean - m) * (k.mean - m))
                }))
            }
            Distribution::Flat => Err(Error::ImproperDensity),
        }
    }

    /// Draws one value; flat priors cannot be sampled.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<F> {
        let z = |rng: &mut R| -> F { c(StandardNormal.sample(rng)) };
        Ok(match self {
            Distribution::Normal { mean, sd } => *mean + *sd * z(rng),
            Distribution::HalfNormal { scale } => *scale * z(rng).abs(),
            Distribution::StudentT { df, location, scale } => {
                let chi = chi_squared(df.to_f64().unwrap_or(1.0), rng)?;
                *location + *scale * z(rng) / (c::<F>(chi) / *df).sqrt()
            }
            Distribution::NoncentralT { df, ncp } => {
                let chi = chi_squared(df.to_f64().unwrap_or(1.0), rng)?;
                (z(rng) + *ncp) / (c::<F>(chi) / *df).sqrt()
            }
            Distribution::NormalMixture { components } => {
                let u: f64 = rng.random();
                let u = c::<F>(u);
                let mut acc = F::zero();
                let mut chosen = components.last().expect("validated non-empty");
                for k in components {
                    acc = acc + k.weight;
                    if u < acc {
                        chosen = k;
                        break;
                    }
                }
                chosen.mean + chosen.sd * z(rng)
            }
            Distribution::Flat => return Err(Error::ImproperDensity),
        })
    }
}

fn chi_squared<R: Rng + ?Sized>(df: f64, rng: &mut R) -> Result<f64> {
    let d = ChiSquared::new(df).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(d.sample(rng))
}

fn nct_pdf<F: Scalar>(x: F, df: F, ncp: F) -> F {
    if x.abs() < c(1e-8) {
        let half = c::<F>(0.5);
        return (ln_gamma((df + F::one()) * half)
            - ln_gamma(df * half)
            - half * (F::PI() * df).ln()
            - half * ncp * ncp)
            .exp();
    }
    let two = c::<F>(2.0);
    let shifted = x * (F::one() + two / df).sqrt();
    let v = df / x * (noncentral_t::cdf(shifted, df + two, ncp) - noncentral_t::cdf(x, df, ncp));
    v.max(F::zero())
}

/// Inverts a continuous cdf by bracketing outward from `guess` and polishing with Brent.
fn invert_cdf<F: Scalar>(cdf: impl Fn(F) -> F, p: F, guess: F, spread: F) -> Result<F> {
    let mut step = spread.max(c(1e-3));
    let mut lo = guess - step;
    let mut hi = guess + step;
    let mut tries = 0;
    while cdf(lo) > p {
        step = step * c(2.0);
        lo = guess - step;
        tries += 1;
        if tries > 200 {
            return Err(Error::Numerical("could not bracket quantile".into()));
        }
    }
    step = spread.max(c(1e-3));
    while cdf(hi) < p {
        step = step * c(2.0);
        hi = guess + step;
        tries += 1;
        if tries > 400 {
            return Err(Error::Numerical("could not bracket quantile".into()));
        }
    }
    let xtol = F::epsilon() * c::<F>(4.0) * (lo.abs().max(hi.abs()).max(F::one()));
    brent(|x| cdf(x) - p, lo, hi, xtol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn standard_normal_density_at_zero() {
        let d = Distribution::normal(0.0_f64, 1.0).unwrap();
        assert!((d.density(0.0).unwrap() - 0.398_942_3).abs() < 1e-7);
        assert!((d.cdf(0.0).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn half_normal_support() {
        let d = Distribution::half_normal(0.5_f64).unwrap();
        assert_eq!(d.density(-0.1).unwrap(), 0.0);
        assert_eq!(d.cdf(-0.1).unwrap(), 0.0);
        assert!(d.density(0.1).unwrap() > 0.0);
    }

    #[test]
    fn flat_is_improper() {
        let d = Distribution::<f64>::Flat;
        assert!(matches!(d.density(0.0), Err(Error::ImproperDensity)));
        assert_eq!(d.ln_prior(123.0), 0.0);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        assert!(d.sample(&mut rng).is_err());
    }

    #[test]
    fn parameter_validation() {
        assert!(Distribution::normal(0.0_f64, 0.0).is_err());
        assert!(Distribution::student_t(0.0_f64, 0.0, 1.0).is_err());
        assert!(Distribution::noncentral_t(-1.0_f64, 0.0).is_err());
        let bad = vec![
            MixtureComponent { weight: 0.6, mean: 0.0, sd: 1.0 },
            MixtureComponent { weight: 0.5, mean: 1.0, sd: 1.0 },
        ];
        assert!(Distribution::mixture(bad).is_err());
    }

    #[test]
    fn mixture_density_is_weighted_sum() {
        let comps = vec![
            MixtureComponent { weight: 0.53_f64, mean: 1.10, sd: 0.27 },
            MixtureComponent { weight: 0.47, mean: 0.90, sd: 0.15 },
        ];
        let d = Distribution::mixture(comps).unwrap();
        let n1 = Distribution::normal(1.10, 0.27).unwrap().density(1.0).unwrap();
        let n2 = Distribution::normal(0.90, 0.15).unwrap().density(1.0).unwrap();
        assert!((d.density(1.0).unwrap() - (0.53 * n1 + 0.47 * n2)).abs() < 1e-15);
    }

    #[test]
    fn mixture_moments() {
        let d = Distribution::mixture(vec![
            MixtureComponent { weight: 0.5_f64, mean: -3.0, sd: 1.0 },
            MixtureComponent { weight: 0.5, mean: 3.0, sd: 1.0 },
        ])
        .unwrap();
        assert!((d.mean().unwrap()).abs() < 1e-15);
        assert!((d.variance().unwrap() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn t_variance_requires_df_above_two() {
        let d = Distribution::student_t(2.0_f64, 0.0, 1.0).unwrap();
        assert!(d.variance().is_err());
        let d = Distribution::student_t(5.0_f64, 1.0, 2.0).unwrap();
        assert!((d.variance().unwrap() - 4.0 * 5.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn serde_tagged_round_trip() {
        let d = Distribution::normal(0.1_f64, 0.69).unwrap();
        let s = serde_json::to_string(&d).unwrap();
        assert_eq!(s, r#"{"family":"normal","mean":0.1,"sd":0.69}"#);
        let back: Distribution<f64> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn sampling_moments() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let d = Distribution::student_t(6.0_f64, 1.0, 2.0).unwrap();
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| d.sample(&mut rng).unwrap()).collect();
        let m = xs.iter().sum::<f64>() / n as f64;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n as f64;
        assert!((m - 1.0).abs() < 0.03);
        assert!((v / d.variance().unwrap() - 1.0).abs() < 0.05);
    }

    #[test]
    fn f32_density() {
        let d = Distribution::normal(0.0_f32, 1.0).unwrap();
        assert!((d.density(0.0).unwrap() - 0.398_942_3).abs() < 1e-6);
    }
}
