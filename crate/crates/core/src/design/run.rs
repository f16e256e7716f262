use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bayes::{fit_bayes_two_group, savage_dickey_bf10, BayesFactor, BfSettings, DELTA_NAME};
use super::metrics::{aggregate_metrics, DesignMetrics};
use super::rules::{evaluate_decisions, DecisionRules, Rule};
use super::simulate::{draw_truth, simulate_dataset, Truth};
use super::{DesignSpec, Generation, NewExperimentPriors};
use crate::error::{Error, Result};
use crate::freq::{ols_hc3_interval, welch_test, TwoGroupData};
use crate::mcmc::McmcSettings;
use crate::stats::{hdi, quantile_interval, IntervalEstimate, Purpose, RngStream};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSettings {
    /// The seed is replaced by each design's own seed.
    pub mcmc: McmcSettings,
    #[serde(default)]
    pub rules: DecisionRules,
    #[serde(default)]
    pub bf: BfSettings,
    #[serde(default)]
    pub generation: Generation,
}

impl DesignSettings {
    pub fn validate(&self) -> Result<()> {
        self.mcmc.validate()?;
        self.rules.validate()?;
        self.bf.validate()
    }
}

/// Everything recorded about one simulated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateOutcome {
    pub replicate: u64,
    pub truth: Truth,
    pub converged: bool,
    pub max_rhat: f64,
    pub min_ess: f64,
    pub welch_p: f64,
    /// Difference in means, E minus C.
    pub freq_estimate: f64,
    pub freq_interval: IntervalEstimate<f64>,
    pub bayes_mean: f64,
    pub bayes_median: f64,
    pub hdi: IntervalEstimate<f64>,
    pub quantile_interval: IntervalEstimate<f64>,
    pub bf: BayesFactor,
    pub decisions: BTreeMap<Rule, bool>,
}

impl ReplicateOutcome {
    /// Effect estimate a rule is judged by.
    pub fn estimate_for(&self, rule: Rule) -> f64 {
        if rule.is_frequentist() {
            self.freq_estimate
        } else {
            self.bayes_mean
        }
    }
}

/// Runs both pipelines on one dataset.
pub fn analyze_replicate(
    data: &TwoGroupData<f64>,
    truth: Truth,
    priors: &NewExperimentPriors,
    settings: &DesignSettings,
    design_id: u64,
    replicate: u64,
) -> Result<ReplicateOutcome> {
    let level = settings.rules.level;
    let welch = welch_test(data, settings.rules.alpha)?;
    let ols = ols_hc3_interval(data, level)?;
    let fit = fit_bayes_two_group(data, priors, &settings.mcmc, design_id, replicate)?;
    let delta = fit.draws.get(DELTA_NAME)?;
    let mut rng =
        RngStream::new(settings.mcmc.seed, design_id, replicate, Purpose::Bootstrap).rng();
    let bf = savage_dickey_bf10(&delta, &priors.delta, &settings.bf, &mut rng)?;
    let mut outcome = ReplicateOutcome {
        replicate,
        truth,
        converged: fit.is_converged(),
        max_rhat: fit.report.max_rhat(),
        min_ess: fit.report.min_ess(),
        welch_p: welch.p_value,
        freq_estimate: ols.estimate,
        freq_interval: ols.interval,
        bayes_mean: delta.mean(),
        bayes_median: delta.median(),
        hdi: hdi(&delta, level)?,
        quantile_interval: quantile_interval(&delta, level)?,
        bf,
        decisions: BTreeMap::new(),
    };
    outcome.decisions = evaluate_decisions(&outcome, &settings.rules);
    Ok(outcome)
}

/// Simulates and analyzes replicate `replicate` of a design. Every random
/// quantity comes from a stream keyed by `(design.seed, design_id, replicate)`.
pub fn run_replicate(
    design: &DesignSpec,
    design_id: u64,
    replicate: u64,
    priors: &NewExperimentPriors,
    settings: &DesignSettings,
) -> Result<ReplicateOutcome> {
    let stream = RngStream::new(design.seed, design_id, replicate, Purpose::ParameterDraw);
    let truth = draw_truth(design, priors, settings.generation, &mut stream.rng())?;
    let data = simulate_dataset(design, &truth, &mut stream.with_purpose(Purpose::Simulate).rng())?;
    let settings =
        DesignSettings { mcmc: McmcSettings { seed: design.seed, ..settings.mcmc }, ..*settings };
    analyze_replicate(&data, truth, priors, &settings, design_id, replicate)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignResult {
    pub design_id: u64,
    pub design: DesignSpec,
    pub metrics: DesignMetrics,
    /// Sorted by replicate id.
    pub outcomes: Vec<ReplicateOutcome>,
}

pub fn run_design(
    design: &DesignSpec,
    design_id: u64,
    priors: &NewExperimentPriors,
    settings: &DesignSettings,
) -> Result<DesignResult> {
    let mut out = run_indexed(&[(design_id, *design)], priors, settings, None)?;
    Ok(out.pop().expect("one design"))
}

/// Runs every replicate of every design on a pool of `workers` threads (the
/// global pool when `None`). Design `i` of the grid gets stream id `i`.
/// Results do not depend on the worker count.
pub fn run_design_grid(
    designs: &[DesignSpec],
    priors: &NewExperimentPriors,
    settings: &DesignSettings,
    workers: Option<usize>,
) -> Result<Vec<DesignResult>> {
    let indexed: Vec<_> = designs.iter().enumerate().map(|(i, d)| (i as u64, *d)).collect();
    run_indexed(&indexed, priors, settings, workers)
}

fn run_indexed(
    designs: &[(u64, DesignSpec)],
    priors: &NewExperimentPriors,
    settings: &DesignSettings,
    workers: Option<usize>,
) -> Result<Vec<DesignResult>> {
    if designs.is_empty() {
        return Err(Error::Config("design grid is empty".into()));
    }
    for (_, d) in designs {
        d.validate()?;
    }
    priors.validate()?;
    settings.validate()?;

    let items: Vec<(usize, u64)> = designs
        .iter()
        .enumerate()
        .flat_map(|(i, (_, d))| (0..d.replicates as u64).map(move |r| (i, r)))
        .collect();
    let work = || -> Result<Vec<ReplicateOutcome>> {
        items
            .par_iter()
            .map(|&(i, r)| {
                let (id, design) = &designs[i];
                run_replicate(design, *id, r, priors, settings)
            })
            .collect()
    };
    let outcomes = match workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(work)?,
        None => work()?,
    };

    let mut outcomes = outcomes.into_iter();
    designs
        .iter()
        .map(|&(design_id, design)| {
            let mine: Vec<_> = outcomes.by_ref().take(design.replicates).collect();
            let metrics = aggregate_metrics(&design, design_id, &mine, &settings.rules)?;
            Ok(DesignResult { design_id, design, metrics, outcomes: mine })
        })
        .collect()
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::stats::IntervalKind;

    /// Outcome with a given HDI, Bayes factor and Welch p-value; the other
    /// intervals copy the HDI.
    pub(crate) fn outcome_with(hdi: (f64, f64), bf10: f64, welch_p: f64) -> ReplicateOutcome {
        let iv = |kind| IntervalEstimate::new(hdi.0, hdi.1, 0.95, kind).unwrap();
        ReplicateOutcome {
            replicate: 0,
            truth: Truth { theta_c: 0.1, delta: 1.0, psi: 0.0, lambda: 0.0 },
            converged: true,
            max_rhat: 1.0,
            min_ess: 1000.0,
            welch_p,
            freq_estimate: 0.5 * (hdi.0 + hdi.1),
            freq_interval: iv(IntervalKind::Confidence),
            bayes_mean: 0.5 * (hdi.0 + hdi.1),
            bayes_median: 0.5 * (hdi.0 + hdi.1),
            hdi: iv(IntervalKind::Hdi),
            quantile_interval: iv(IntervalKind::Quantile),
            bf: BayesFactor { bf10, raw: bf10, mc_se: None, lower: None },
            decisions: BTreeMap::new(),
        }
    }

    fn small() -> (Vec<DesignSpec>, DesignSettings) {
        let designs = super::super::design_grid(&[(10, 5)], &[0.0, 1.9], &[1.0], 0.1, 0.0, 6, 17);
        let settings = DesignSettings {
            mcmc: McmcSettings { warmup: 400, draws: 400, ..Default::default() },
            bf: BfSettings { bootstrap: 20, ..Default::default() },
            ..Default::default()
        };
        (designs, settings)
    }

    #[test]
    fn grid_is_independent_of_worker_count() {
        let (designs, settings) = small();
        let priors = NewExperimentPriors::reference();
        let one = run_design_grid(&designs, &priors, &settings, Some(1)).unwrap();
        let three = run_design_grid(&designs, &priors, &settings, Some(3)).unwrap();
        assert_eq!(one, three);
        assert_eq!(one[1].outcomes.len(), 6);
        assert!(one[1].outcomes.windows(2).all(|w| w[0].replicate < w[1].replicate));
        let alone = run_design(&designs[1], 1, &priors, &settings).unwrap();
        assert_eq!(alone, one[1]);
    }

    #[test]
    fn model_probability_is_the_bayes_factor_transform() {
        let (designs, settings) = small();
        let res = run_design(&designs[1], 1, &NewExperimentPriors::reference(), &settings).unwrap();
        for o in &res.outcomes {
            assert_eq!(o.bf.post_model_prob(), o.bf.bf10 / (1.0 + o.bf.bf10));
            assert!(o.bf.bf10 > 0.0);
        }
    }

    #[test]
    fn empty_grid_is_an_error() {
        let (_, settings) = small();
        assert!(run_design_grid(&[], &NewExperimentPriors::reference(), &settings, None).is_err());
    }
}
