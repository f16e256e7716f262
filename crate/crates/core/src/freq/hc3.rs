use serde::{Deserialize, Serialize};

use super::welch::TwoGroupData;
use crate::error::{Error, Result};
use crate::scalar::{c, from_usize, Scalar};
use crate::stats::summary::mean;
use crate::stats::{Distribution, IntervalEstimate, IntervalKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OlsEstimate<F> {
    /// Difference in means, E minus C.
    pub estimate: F,
    pub std_error: F,
    pub interval: IntervalEstimate<F>,
}

/// Two-group OLS `y = b0 + b1 * 1(E)` with an HC3 sandwich interval for `b1`.
pub fn ols_hc3_interval<F: Scalar>(data: &TwoGroupData<F>, level: F) -> Result<OlsEstimate<F>> {
    ols_hc3_groups(&data.y_c, &data.y_e, level)
}

/// Same as [`ols_hc3_interval`] on raw group slices, so single-observation
/// groups surface as a leverage error instead of a construction error.
pub fn ols_hc3_groups<F: Scalar>(y_c: &[F], y_e: &[F], level: F) -> Result<OlsEstimate<F>> {
    if y_c.is_empty() || y_e.is_empty() {
        return Err(Error::DegenerateData("empty group".into()));
    }
    // design rows (1, 0) for C and (1, 1) for E
    let rows: Vec<([F; 2], F)> = y_c
        .iter()
        .map(|&y| ([F::one(), F::zero()], y))
        .chain(y_e.iter().map(|&y| ([F::one(), F::one()], y)))
        .collect();
    let mut xtx = [[F::zero(); 2]; 2];
    let mut xty = [F::zero(); 2];
    for (x, y) in &rows {
        for i in 0..2 {
            xty[i] = xty[i] + x[i] * *y;
            for j in 0..2 {
                xtx[i][j] = xtx[i][j] + x[i] * x[j];
            }
        }
    }
    let det = xtx[0][0] * xtx[1][1] - xtx[0][1] * xtx[1][0];
    let inv = [[xtx[1][1] / det, -xtx[0][1] / det], [-xtx[1][0] / det, xtx[0][0] / det]];
    let beta = [inv[0][0] * xty[0] + inv[0][1] * xty[1], inv[1][0] * xty[0] + inv[1][1] * xty[1]];

    // meat = sum_i w_i x_i x_i^T with w_i = e_i^2 / (1 - h_ii)^2
    let mut meat = [[F::zero(); 2]; 2];
    for (x, y) in &rows {
        let fitted = beta[0] * x[0] + beta[1] * x[1];
        let e = *y - fitted;
        let mut h = F::zero();
        for i in 0..2 {
            for j in 0..2 {
                h = h + x[i] * inv[i][j] * x[j];
            }
        }
        let one_minus_h = F::one() - h;
        if one_minus_h <= c(1e-12) {
            return Err(Error::SingularLeverage);
        }
        let w = e * e / (one_minus_h * one_minus_h);
        for i in 0..2 {
            for j in 0..2 {
                meat[i][j] = meat[i][j] + w * x[i] * x[j];
            }
        }
    }
    // (X'X)^-1 meat (X'X)^-1, entry (1, 1)
    let mut var = F::zero();
    for i in 0..2 {
        for j in 0..2 {
            var = var + inv[1][i] * meat[i][j] * inv[j][1];
        }
    }
    let n = y_c.len() + y_e.len();
    finish(beta[1], var.sqrt(), n, level)
}

/// Classical homoscedastic OLS interval for the mean difference.
pub fn ols_classical_interval<F: Scalar>(
    data: &TwoGroupData<F>,
    level: F,
) -> Result<OlsEstimate<F>> {
    let (n_c, n_e) = (data.n_c(), data.n_e());
    let m_c = mean(&data.y_c);
    let m_e = mean(&data.y_e);
    let sse = data.y_c.iter().map(|&y| (y - m_c) * (y - m_c)).fold(F::zero(), |a, b| a + b)
        + data.y_e.iter().map(|&y| (y - m_e) * (y - m_e)).fold(F::zero(), |a, b| a + b);
    let s2 = sse / from_usize(n_c + n_e - 2);
    let se = (s2 * (F::one() / from_usize(n_c) + F::one() / from_usize(n_e))).sqrt();
    finish(m_e - m_c, se, n_c + n_e, level)
}

fn finish<F: Scalar>(estimate: F, std_error: F, n: usize, level: F) -> Result<OlsEstimate<F>> {
    if n < 3 {
        return Err(Error::DegenerateData("need at least 3 observations".into()));
    }
    let df = from_usize::<F>(n - 2);
    let crit = Distribution::student_t(df, F::zero(), F::one())?
        .quantile(F::one() - (F::one() - level) * c(0.5))?;
    let interval = IntervalEstimate::new(
        estimate - crit * std_error,
        estimate + crit * std_error,
        level,
        IntervalKind::Confidence,
    )?;
    Ok(OlsEstimate { estimate, std_error, interval })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shifted_groups_estimate_the_shift() {
        let y_c = vec![0.1_f64, 0.5, -0.3, 0.8, 0.0];
        let y_e: Vec<f64> = y_c.iter().map(|y| y + 1.7).collect();
        let r = ols_hc3_interval(&TwoGroupData::new(y_c, y_e).unwrap(), 0.95).unwrap();
        assert!((r.estimate - 1.7).abs() < 1e-12);
        assert_eq!(r.interval.kind, IntervalKind::Confidence);
    }

    #[test]
    fn single_observation_group_is_singular() {
        assert!(matches!(
            ols_hc3_groups(&[1.0], &[1.0, 2.0, 3.0], 0.95),
            Err(Error::SingularLeverage)
        ));
    }

    #[test]
    fn balanced_equal_spread_inflates_by_leverage_factor() {
        // equal leverage 1/n and equal sample variances: HC3 var = n/(n-1) * OLS var
        let y_c = vec![1.0_f64, 2.0, 3.0, 4.0];
        let y_e = vec![5.0, 6.0, 7.0, 8.0];
        let d = TwoGroupData::new(y_c, y_e).unwrap();
        let hc3 = ols_hc3_interval(&d, 0.95).unwrap();
        let ols = ols_classical_interval(&d, 0.95).unwrap();
        let ratio = hc3.std_error.powi(2) / ols.std_error.powi(2);
        assert!((ratio - 4.0 / 3.0).abs() < 1e-12);
    }
}
