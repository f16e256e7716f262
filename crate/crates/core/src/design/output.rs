use std::io::Write;

use super::metrics::DesignMetrics;
use super::run::DesignResult;
use crate::error::{Error, Result};

fn finish<W: Write>(mut w: csv::Writer<W>, what: &str) -> Result<()> {
    w.flush().map_err(|e| Error::io(what, e))
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// One row per design: design parameters, exclusions, RMSE, interval widths
/// and Bayes factor summaries.
pub fn write_design_metrics_csv<W: Write>(metrics: &[DesignMetrics], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "design_id",
        "n_e",
        "n_c",
        "delta",
        "sigma_ratio",
        "theta_c",
        "log_sigma_c",
        "replicates",
        "valid",
        "excluded",
        "flagged",
        "rmse_mean",
        "rmse_median",
        "rmse_freq",
        "hdi_width_q05",
        "hdi_width_q50",
        "hdi_width_q95",
        "quantile_width_q05",
        "quantile_width_q50",
        "quantile_width_q95",
        "freq_width_q05",
        "freq_width_q50",
        "freq_width_q95",
        "bf_median",
        "bf_q025",
        "bf_q975",
        "prop_bf_above",
        "prop_pmp_lower_above",
    ])?;
    for m in metrics {
        let d = &m.design;
        let widths = [m.hdi_width, m.quantile_width, m.freq_width]
            .into_iter()
            .flat_map(|q| [q.q05, q.q50, q.q95]);
        let mut row = vec![
            m.design_id.to_string(),
            d.n_e.to_string(),
            d.n_c.to_string(),
            d.delta.to_string(),
            d.sigma_ratio.to_string(),
            d.theta_c.to_string(),
            d.log_sigma_c.to_string(),
            d.replicates.to_string(),
            m.valid.to_string(),
            m.excluded.to_string(),
            m.flagged.to_string(),
            m.rmse_mean.to_string(),
            m.rmse_median.to_string(),
            m.rmse_freq.to_string(),
        ];
        row.extend(widths.map(|x| x.to_string()));
        row.extend([
            m.bf_median.to_string(),
            m.bf_q025.to_string(),
            m.bf_q975.to_string(),
            m.prop_bf_above.to_string(),
            opt(m.prop_pmp_lower_above),
        ]);
        wtr.write_record(&row)?;
    }
    finish(wtr, "design metrics")
}

/// One row per design and rule. Type S and M cells read `NA` for null
/// designs and `none` when nothing was significant.
pub fn write_rule_metrics_csv<W: Write>(metrics: &[DesignMetrics], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["design_id", "rule", "rejections", "rate", "mc_se", "type_s", "type_m"])?;
    for m in metrics {
        for r in &m.rules {
            wtr.write_record([
                m.design_id.to_string(),
                r.rule.to_string(),
                r.rejections.to_string(),
                r.rate.to_string(),
                r.mc_se.to_string(),
                r.type_s.to_string(),
                r.type_m.to_string(),
            ])?;
        }
    }
    finish(wtr, "rule metrics")
}

/// Long format `design_id,replicate,quantity,value`, one row per recorded
/// quantity. Decisions are written as 0/1 under `rule:<name>`.
pub fn write_outcomes_csv<W: Write>(results: &[DesignResult], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["design_id", "replicate", "quantity", "value"])?;
    for res in results {
        for o in &res.outcomes {
            let mut rows: Vec<(String, String)> = [
                ("true_delta", o.truth.delta),
                ("true_theta_c", o.truth.theta_c),
                ("true_psi", o.truth.psi),
                ("converged", if o.converged { 1.0 } else { 0.0 }),
                ("max_rhat", o.max_rhat),
                ("min_ess", o.min_ess),
                ("welch_p", o.welch_p),
                ("freq_estimate", o.freq_estimate),
                ("freq_lower", o.freq_interval.lower),
                ("freq_upper", o.freq_interval.upper),
                ("bayes_mean", o.bayes_mean),
                ("bayes_median", o.bayes_median),
                ("hdi_lower", o.hdi.lower),
                ("hdi_upper", o.hdi.upper),
                ("quantile_lower", o.quantile_interval.lower),
                ("quantile_upper", o.quantile_interval.upper),
                ("bf10", o.bf.bf10),
                ("bf10_raw", o.bf.raw),
                ("post_model_prob", o.bf.post_model_prob()),
            ]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
            rows.push(("bf10_mc_se".into(), opt(o.bf.mc_se)));
            rows.push(("post_model_prob_lower".into(), opt(o.bf.post_model_prob_lower())));
            for (rule, hit) in &o.decisions {
                rows.push((format!("rule:{rule}"), u8::from(*hit).to_string()));
            }
            for (k, v) in rows {
                wtr.write_record([res.design_id.to_string(), o.replicate.to_string(), k, v])?;
            }
        }
    }
    finish(wtr, "replicate outcomes")
}
