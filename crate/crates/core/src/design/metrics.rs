use std::fmt;

use serde::{Deserialize, Serialize};

use super::rules::{DecisionRules, Rule};
use super::{DesignSpec, ReplicateOutcome, MAX_EXCLUDED_SHARE};
use crate::error::{Error, Result};
use crate::stats::quantile_sorted;

/// Type S or type M error rate among significant replicates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorRate {
    Rate(f64),
    /// The true effect is zero, so sign and magnitude errors are undefined.
    NotApplicable,
    /// No replicate was significant under the rule.
    NoneSignificant,
}

impl ErrorRate {
    pub fn value(self) -> Option<f64> {
        match self {
            ErrorRate::Rate(r) => Some(r),
            _ => None,
        }
    }
}

impl fmt::Display for ErrorRate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ErrorRate::Rate(r) => write!(f, "{r}"),
            ErrorRate::NotApplicable => f.write_str("NA"),
            ErrorRate::NoneSignificant => f.write_str("none"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuleMetrics {
    pub rule: Rule,
    pub rejections: usize,
    pub rate: f64,
    /// Binomial Monte Carlo standard error of `rate`.
    pub mc_se: f64,
    pub type_s: ErrorRate,
    pub type_m: ErrorRate,
}

/// 5%, 50% and 95% quantiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WidthQuantiles {
    pub q05: f64,
    pub q50: f64,
    pub q95: f64,
}

impl WidthQuantiles {
    fn of(mut v: Vec<f64>) -> Self {
        v.sort_by(f64::total_cmp);
        WidthQuantiles {
            q05: quantile_sorted(&v, 0.05),
            q50: quantile_sorted(&v, 0.5),
            q95: quantile_sorted(&v, 0.95),
        }
    }
}

/// Operating characteristics of one design over its converged replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignMetrics {
    pub design_id: u64,
    pub design: DesignSpec,
    pub valid: usize,
    pub excluded: usize,
    /// More than 1% of replicates failed the convergence checks.
    pub flagged: bool,
    pub rules: Vec<RuleMetrics>,
    pub rmse_mean: f64,
    pub rmse_median: f64,
    pub rmse_freq: f64,
    pub hdi_width: WidthQuantiles,
    pub quantile_width: WidthQuantiles,
    pub freq_width: WidthQuantiles,
    pub bf_median: f64,
    pub bf_q025: f64,
    pub bf_q975: f64,
    /// Share of replicates with the Bayes factor above its threshold.
    pub prop_bf_above: f64,
    /// Share whose bootstrap lower bound of the model probability exceeds its
    /// threshold; absent without bootstrap resamples.
    pub prop_pmp_lower_above: Option<f64>,
}

impl DesignMetrics {
    pub fn rule(&self, rule: Rule) -> &RuleMetrics {
        self.rules.iter().find(|r| r.rule == rule).expect("every rule is aggregated")
    }
}

fn rmse(pairs: impl Iterator<Item = (f64, f64)>) -> f64 {
    let (mut ss, mut n) = (0.0, 0usize);
    for (est, truth) in pairs {
        ss += (est - truth).powi(2);
        n += 1;
    }
    (ss / n as f64).sqrt()
}

/// Aggregates the converged outcomes of a design. Type S and M rates use the
/// rule's own effect estimate and only the replicates the rule declared
/// significant.
pub fn aggregate_metrics(
    design: &DesignSpec,
    design_id: u64,
    outcomes: &[ReplicateOutcome],
    rules: &DecisionRules,
) -> Result<DesignMetrics> {
    let valid: Vec<&ReplicateOutcome> = outcomes.iter().filter(|o| o.converged).collect();
    let excluded = outcomes.len() - valid.len();
    if valid.is_empty() {
        return Err(Error::NoConvergence(format!(
            "design {design_id}: none of {} replicates converged",
            outcomes.len()
        )));
    }
    let n = valid.len() as f64;
    let null_effect = design.delta == 0.0;

    let rule_metrics = Rule::ALL
        .iter()
        .map(|&rule| {
            let sig: Vec<&&ReplicateOutcome> =
                valid.iter().filter(|o| o.decisions.get(&rule).copied().unwrap_or(false)).collect();
            let rate = sig.len() as f64 / n;
            let share = |pred: &dyn Fn(&ReplicateOutcome) -> bool| {
                if null_effect {
                    ErrorRate::NotApplicable
                } else if sig.is_empty() {
                    ErrorRate::NoneSignificant
                } else {
                    ErrorRate::Rate(
                        sig.iter().filter(|o| pred(o)).count() as f64 / sig.len() as f64,
                    )
                }
            };
            RuleMetrics {
                rule,
                rejections: sig.len(),
                rate,
                mc_se: (rate * (1.0 - rate) / n).sqrt(),
                type_s: share(&|o| o.estimate_for(rule).signum() != o.truth.delta.signum()),
                type_m: share(&|o| o.estimate_for(rule).abs() > o.truth.delta.abs()),
            }
        })
        .collect();

    let mut bf: Vec<f64> = valid.iter().map(|o| o.bf.bf10).collect();
    bf.sort_by(f64::total_cmp);
    let lower: Option<Vec<f64>> = valid.iter().map(|o| o.bf.post_model_prob_lower()).collect();

    Ok(DesignMetrics {
        design_id,
        design: *design,
        valid: valid.len(),
        excluded,
        flagged: excluded as f64 > MAX_EXCLUDED_SHARE * outcomes.len() as f64,
        rules: rule_metrics,
        rmse_mean: rmse(valid.iter().map(|o| (o.bayes_mean, o.truth.delta))),
        rmse_median: rmse(valid.iter().map(|o| (o.bayes_median, o.truth.delta))),
        rmse_freq: rmse(valid.iter().map(|o| (o.freq_estimate, o.truth.delta))),
        hdi_width: WidthQuantiles::of(valid.iter().map(|o| o.hdi.width()).collect()),
        quantile_width: WidthQuantiles::of(
            valid.iter().map(|o| o.quantile_interval.width()).collect(),
        ),
        freq_width: WidthQuantiles::of(valid.iter().map(|o| o.freq_interval.width()).collect()),
        bf_median: quantile_sorted(&bf, 0.5),
        bf_q025: quantile_sorted(&bf, 0.025),
        bf_q975: quantile_sorted(&bf, 0.975),
        prop_bf_above: bf.iter().filter(|&&b| b > rules.bf_threshold).count() as f64 / n,
        prop_pmp_lower_above: lower
            .map(|l| l.iter().filter(|&&p| p > rules.pmp_threshold).count() as f64 / n),
    })
}
