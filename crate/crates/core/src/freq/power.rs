use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{c, from_usize, Scalar};
use crate::stats::special::{brent, norm_quantile};
use crate::stats::{noncentral_t, Distribution};

/// Upper limit on the control-group size searched by [`welch_sample_size`].
pub const N_CAP: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleSizeRequest<F> {
    pub delta_rel: F,
    pub sigma_c: F,
    pub sigma_e: F,
    /// n_E / n_C
    pub alloc_ratio: F,
    pub alpha: F,
    pub power: F,
}

impl<F: Scalar> SampleSizeRequest<F> {
    pub fn validate(&self) -> Result<()> {
        let pos = |name: &str, v: F| {
            if v > F::zero() && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")))
            }
        };
        pos("delta_rel", self.delta_rel)?;
        pos("sigma_c", self.sigma_c)?;
        pos("sigma_e", self.sigma_e)?;
        pos("alloc_ratio", self.alloc_ratio)?;
        for (name, v) in [("alpha", self.alpha), ("power", self.power)] {
            if !(v > F::zero() && v < F::one()) {
                return Err(Error::InvalidParameter(format!("{name} {v} outside (0, 1)")));
            }
        }
        if self.alpha >= self.power {
            return Err(Error::InvalidParameter("alpha must be below the target power".into()));
        }
        Ok(())
    }
}

/// Power of the two-sided Welch test at real-valued group sizes, evaluated at
/// the requested standard deviations and effect `req.delta_rel`.
pub fn welch_power_at<F: Scalar>(n_c: F, n_e: F, req: &SampleSizeRequest<F>) -> Result<F> {
    if !(n_c > F::one() && n_e > F::one()) {
        return Err(Error::InvalidParameter("group sizes must exceed 1".into()));
    }
    let a = req.sigma_c * req.sigma_c / n_c;
    let b = req.sigma_e * req.sigma_e / n_e;
    let df = (a + b) * (a + b) / (a * a / (n_c - F::one()) + b * b / (n_e - F::one()));
    let ncp = req.delta_rel / (a + b).sqrt();
    let crit = Distribution::student_t(df, F::zero(), F::one())?
        .quantile(F::one() - req.alpha * c(0.5))?;
    let upper = F::one() - noncentral_t::cdf(crit, df, ncp);
    let lower = noncentral_t::cdf(-crit, df, ncp);
    Ok((upper + lower).min(F::one()))
}

pub fn welch_power<F: Scalar>(n_c: usize, n_e: usize, req: &SampleSizeRequest<F>) -> Result<F> {
    if n_c < 2 || n_e < 2 {
        return Err(Error::InvalidParameter("group sizes must be at least 2".into()));
    }
    welch_power_at(from_usize(n_c), from_usize(n_e), req)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleSize<F> {
    pub n_c: usize,
    pub n_e: usize,
    /// Real-valued control size solving power = target.
    pub n_c_exact: F,
    /// Power at the returned integer sizes.
    pub achieved_power: F,
}

/// Smallest group sizes reaching the target power.
///
/// Solves `power(n, alloc * n) = target` for real `n` (integer stepping from a
/// normal-approximation start, then Brent inside the final unit interval) and
/// rounds each group up: `n_C = ceil(n)`, `n_E = ceil(alloc * n)`.
pub fn welch_sample_size<F: Scalar>(req: &SampleSizeRequest<F>) -> Result<SampleSize<F>> {
    req.validate()?;
    let alloc = req.alloc_ratio;
    let gap = |n: F| -> Result<F> { Ok(welch_power_at(n, alloc * n, req)? - req.power) };
    let n_min = c::<F>(2.0).max(c::<F>(2.0) / alloc);

    let za = norm_quantile(F::one() - req.alpha * c(0.5));
    let zb = norm_quantile(req.power);
    let var = req.sigma_c * req.sigma_c + req.sigma_e * req.sigma_e / alloc;
    let approx = (za + zb) * (za + zb) * var / (req.delta_rel * req.delta_rel);
    let cap = from_usize::<F>(N_CAP);
    if !(approx.is_finite()) || approx > cap {
        return Err(Error::PowerUnreachable { cap: N_CAP });
    }

    let mut hi = approx.ceil().max(n_min);
    if gap(n_min)? >= F::zero() {
        hi = n_min;
    } else {
        while gap(hi)? < F::zero() {
            hi = hi + F::one();
            if hi > cap {
                return Err(Error::PowerUnreachable { cap: N_CAP });
            }
        }
        while hi - F::one() >= n_min && gap(hi - F::one())? >= F::zero() {
            hi = hi - F::one();
        }
    }

    let exact = if hi <= n_min || gap(hi)? == F::zero() {
        hi
    } else {
        let lo = (hi - F::one()).max(n_min);
        brent(|n| gap(n).unwrap_or(F::nan()), lo, hi, c::<F>(1e-10) * hi)?
    };
    let n_c = exact.ceil().to_usize().unwrap_or(N_CAP);
    let n_e = (alloc * exact).ceil().to_usize().unwrap_or(N_CAP);
    let achieved_power = welch_power(n_c.max(2), n_e.max(2), req)?;
    Ok(SampleSize { n_c, n_e, n_c_exact: exact, achieved_power })
}
