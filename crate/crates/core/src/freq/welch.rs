use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{c, from_usize, Scalar};
use crate::stats::summary::{mean, variance};
use crate::stats::Distribution;

/// Observations of a control (C) and experimental (E) group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoGroupData<F> {
    pub y_c: Vec<F>,
    pub y_e: Vec<F>,
}

impl<F: Scalar> TwoGroupData<F> {
    pub fn new(y_c: Vec<F>, y_e: Vec<F>) -> Result<Self> {
        if y_c.len() < 2 || y_e.len() < 2 {
            return Err(Error::DegenerateData(format!(
                "each group needs at least 2 observations (got {} and {})",
                y_c.len(),
                y_e.len()
            )));
        }
        if y_c.iter().chain(&y_e).any(|v| !v.is_finite()) {
            return Err(Error::DegenerateData("observations must be finite".into()));
        }
        Ok(TwoGroupData { y_c, y_e })
    }

    pub fn n_c(&self) -> usize {
        self.y_c.len()
    }

    pub fn n_e(&self) -> usize {
        self.y_e.len()
    }

    pub fn mean_diff(&self) -> F {
        mean(&self.y_e) - mean(&self.y_c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchResult<F> {
    pub t: F,
    pub df: F,
    pub p_value: F,
    pub mean_diff: F,
    pub decision: bool,
}

/// Two-sided Welch test of equal means; `t` is signed as E minus C.
pub fn welch_test<F: Scalar>(data: &TwoGroupData<F>, alpha: F) -> Result<WelchResult<F>> {
    if !(alpha > F::zero() && alpha < F::one()) {
        return Err(Error::InvalidParameter(format!("alpha {alpha} outside (0, 1)")));
    }
    let (n_c, n_e) = (from_usize::<F>(data.n_c()), from_usize::<F>(data.n_e()));
    let a = variance(&data.y_c) / n_c;
    let b = variance(&data.y_e) / n_e;
    if a + b <= F::zero() {
        return Err(Error::DegenerateData("both groups have zero variance".into()));
    }
    let mean_diff = data.mean_diff();
    let t = mean_diff / (a + b).sqrt();
    let df = (a + b) * (a + b) / (a * a / (n_c - F::one()) + b * b / (n_e - F::one()));
    let tdist = Distribution::student_t(df, F::zero(), F::one())?;
    let p_value = (c::<F>(2.0) * tdist.cdf(-t.abs())?).min(F::one());
    Ok(WelchResult { t, df, p_value, mean_diff, decision: p_value < alpha })
}
