use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::ReplicateOutcome;
use crate::error::{Error, Result};

/// Decision rules applied to every replicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    /// Welch p-value below alpha.
    Welch,
    /// HC3 confidence interval excludes zero.
    FreqInterval,
    /// Highest density interval excludes zero.
    Hdi,
    /// Equal-tailed credible interval excludes zero.
    QuantileInterval,
    /// Highest density interval lies outside the ROPE.
    Rope,
    /// Highest density interval no wider than the precision threshold.
    Precision,
    /// Bayes factor above its threshold.
    BayesFactor,
    /// Posterior model probability above its threshold.
    PostModelProb,
}

impl Rule {
    pub const ALL: [Rule; 8] = [
        Rule::Welch,
        Rule::FreqInterval,
        Rule::Hdi,
        Rule::QuantileInterval,
        Rule::Rope,
        Rule::Precision,
        Rule::BayesFactor,
        Rule::PostModelProb,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Rule::Welch => "welch",
            Rule::FreqInterval => "freq_interval",
            Rule::Hdi => "hdi",
            Rule::QuantileInterval => "quantile_interval",
            Rule::Rope => "rope",
            Rule::Precision => "precision",
            Rule::BayesFactor => "bayes_factor",
            Rule::PostModelProb => "post_model_prob",
        }
    }

    /// Rules based on the frequentist pipeline use the difference in means as
    /// the effect estimate; the rest use the posterior mean.
    pub fn is_frequentist(self) -> bool {
        matches!(self, Rule::Welch | Rule::FreqInterval)
    }

    /// Whether the rule claims a nonzero effect. Only these enter the
    /// monotonicity-in-effect checks.
    pub fn rejects_null(self) -> bool {
        self != Rule::Precision
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecisionRules {
    pub alpha: f64,
    /// Level of every interval (confidence and credible).
    pub level: f64,
    /// Half-width of the region of practical equivalence around zero.
    pub rope: f64,
    pub max_width: f64,
    pub bf_threshold: f64,
    pub pmp_threshold: f64,
}

impl Default for DecisionRules {
    fn default() -> Self {
        DecisionRules {
            alpha: 0.05,
            level: 0.95,
            rope: 0.1,
            max_width: 1.1,
            bf_threshold: 3.0,
            pmp_threshold: 0.5,
        }
    }
}

impl DecisionRules {
    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| x > 0.0 && x < 1.0;
        if !(unit(self.alpha) && unit(self.level) && unit(self.pmp_threshold)) {
            return Err(Error::Config("alpha, level and pmp_threshold must be in (0, 1)".into()));
        }
        if !(self.rope >= 0.0 && self.max_width > 0.0 && self.bf_threshold > 0.0) {
            return Err(Error::Config("rope, max_width and bf_threshold must be positive".into()));
        }
        Ok(())
    }
}

pub fn evaluate_decisions(
    outcome: &ReplicateOutcome,
    rules: &DecisionRules,
) -> BTreeMap<Rule, bool> {
    Rule::ALL
        .iter()
        .map(|&rule| {
            let hit = match rule {
                Rule::Welch => outcome.welch_p < rules.alpha,
                Rule::FreqInterval => !outcome.freq_interval.contains(0.0),
                Rule::Hdi => !outcome.hdi.contains(0.0),
                Rule::QuantileInterval => !outcome.quantile_interval.contains(0.0),
                Rule::Rope => outcome.hdi.excludes_region(-rules.rope, rules.rope),
                Rule::Precision => outcome.hdi.width() <= rules.max_width,
                Rule::BayesFactor => outcome.bf.bf10 > rules.bf_threshold,
                Rule::PostModelProb => outcome.bf.post_model_prob() > rules.pmp_threshold,
            };
            (rule, hit)
        })
        .collect()
}
