use rand_distr::{Distribution as _, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{check_draws, nondegenerate_moments, ParametricFit};
use crate::error::{Error, Result};
use crate::stats::{
    quantile_sorted, Distribution, DrawVector, MixtureComponent, Purpose, RngStream,
};

pub const MIN_EM_DRAWS: usize = 500;
pub const MAX_COMPONENTS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmSettings {
    pub max_iter: usize,
    /// Stop once the log-likelihood gain of an iteration falls below this.
    pub tol: f64,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for EmSettings {
    fn default() -> Self {
        EmSettings { max_iter: 500, tol: 1e-8, restarts: 5, seed: 1 }
    }
}

struct Mixture {
    w: Vec<f64>,
    mu: Vec<f64>,
    sd: Vec<f64>,
}

enum EmOutcome {
    Fitted(Mixture, f64),
    Collapsed,
}

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;

/// E-step: fills responsibilities and returns the log-likelihood of `m`.
fn e_step(x: &[f64], m: &Mixture, resp: &mut [f64]) -> f64 {
    let k = m.w.len();
    let consts: Vec<f64> = (0..k).map(|j| m.w[j].ln() - m.sd[j].ln() - LN_SQRT_2PI).collect();
    let inv: Vec<f64> = m.sd.iter().map(|s| 1.0 / s).collect();
    let mut ll = 0.0;
    for (i, &v) in x.iter().enumerate() {
        let row = &mut resp[i * k..(i + 1) * k];
        let mut top = f64::NEG_INFINITY;
        for j in 0..k {
            let z = (v - m.mu[j]) * inv[j];
            row[j] = consts[j] - 0.5 * z * z;
            top = top.max(row[j]);
        }
        let mut s = 0.0;
        for r in row.iter_mut() {
            *r = (*r - top).exp();
            s += *r;
        }
        for r in row.iter_mut() {
            *r /= s;
        }
        ll += top + s.ln();
    }
    ll
}

fn run_em(x: &[f64], mut m: Mixture, settings: &EmSettings, floor: f64) -> Result<EmOutcome> {
    let (n, k) = (x.len(), m.w.len());
    let mut resp = vec![0.0; n * k];
    let mut prev = f64::NEG_INFINITY;
    for _ in 0..settings.max_iter {
        let ll = e_step(x, &m, &mut resp);
        if ll < prev - 1e-9 * (1.0 + prev.abs()) {
            return Err(Error::Numerical(format!(
                "EM log-likelihood decreased from {prev} to {ll}"
            )));
        }
        if ll - prev < settings.tol {
            return Ok(EmOutcome::Fitted(m, ll));
        }
        prev = ll;
        for j in 0..k {
            let (mut nk, mut s1) = (0.0, 0.0);
            for i in 0..n {
                nk += resp[i * k + j];
                s1 += resp[i * k + j] * x[i];
            }
            if !(nk > 1e-8) {
                return Ok(EmOutcome::Collapsed);
            }
            let mu = s1 / nk;
            let s2: f64 = (0..n).map(|i| resp[i * k + j] * (x[i] - mu).powi(2)).sum();
            let sd = (s2 / nk).sqrt();
            if !(sd >= floor) {
                return Ok(EmOutcome::Collapsed);
            }
            m.w[j] = nk / n as f64;
            m.mu[j] = mu;
            m.sd[j] = sd;
        }
    }
    let ll = e_step(x, &m, &mut resp);
    if ll < prev - 1e-9 * (1.0 + prev.abs()) {
        return Err(Error::Numerical(format!("EM log-likelihood decreased from {prev} to {ll}")));
    }
    Ok(EmOutcome::Fitted(m, ll))
}

fn to_fit(m: Mixture, ll: f64) -> Result<ParametricFit> {
    let k = m.w.len();
    let mut comps: Vec<MixtureComponent<f64>> =
        (0..k).map(|j| MixtureComponent { weight: m.w[j], mean: m.mu[j], sd: m.sd[j] }).collect();
    comps.sort_by(|a, b| a.mean.total_cmp(&b.mean));
    let total: f64 = comps.iter().map(|c| c.weight).sum();
    comps.iter_mut().for_each(|c| c.weight /= total);
    ParametricFit::new(Distribution::NormalMixture { components: comps }, ll, 3 * k - 1)
}

/// Normal mixtures with `1..=max_components` components fitted by EM, each
/// from several jittered quantile-spaced starts; the fit with the smallest AIC
/// is returned, ties going to fewer components.
///
/// A start whose component sd falls below `1e-6` times the draw sd is
/// abandoned; a component count whose every start collapses is skipped.
pub fn fit_mixture_em(
    draws: &DrawVector<f64>,
    max_components: usize,
    settings: &EmSettings,
) -> Result<ParametricFit> {
    check_draws(draws, MIN_EM_DRAWS)?;
    if !(1..=MAX_COMPONENTS).contains(&max_components) {
        return Err(Error::InvalidParameter(format!(
            "max_components must be in 1..={MAX_COMPONENTS}"
        )));
    }
    if settings.restarts == 0 {
        return Err(Error::InvalidParameter("EM needs at least one start".into()));
    }
    let x = draws.values();
    let (_, overall_sd) = nondegenerate_moments(x)?;
    let sorted = draws.sorted();
    let floor = 1e-6 * overall_sd;

    let mut best: Option<ParametricFit> = None;
    for k in 1..=max_components {
        let mut best_k: Option<(Mixture, f64)> = None;
        for r in 0..settings.restarts {
            let mut rng =
                RngStream::new(settings.seed, k as u64, 0, Purpose::EmRestart(r as u32)).rng();
            let mu = (0..k)
                .map(|j| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    let q = quantile_sorted(&sorted, (j as f64 + 0.5) / k as f64);
                    q + 0.1 * overall_sd / k as f64 * z
                })
                .collect();
            let start =
                Mixture { w: vec![1.0 / k as f64; k], mu, sd: vec![overall_sd / k as f64; k] };
            if let EmOutcome::Fitted(m, ll) = run_em(x, start, settings, floor)? {
                if best_k.as_ref().is_none_or(|(_, b)| ll > *b) {
                    best_k = Some((m, ll));
                }
            }
        }
        let Some((m, ll)) = best_k else { continue };
        let fit = to_fit(m, ll)?;
        if best.as_ref().is_none_or(|b| fit.aic < b.aic - 1e-9 * b.aic.abs().max(1.0)) {
            best = Some(fit);
        }
    }
    best.ok_or_else(|| Error::NoConvergence("every EM start collapsed".into()))
}
