use super::{check_draws, nondegenerate_moments, ParametricFit, MIN_FIT_DRAWS};
use crate::error::{Error, Result};
use crate::stats::special::ln_gamma;
use crate::stats::{Distribution, DrawVector};

pub const DF_MIN: f64 = 2.0;
pub const DF_MAX: f64 = 200.0;
const ECM_MAX_ITER: usize = 2000;
const ECM_TOL: f64 = 1e-10;
const GOLDEN_TOL: f64 = 1e-4;

fn t_log_lik(x: &[f64], loc: f64, scale: f64, df: f64) -> f64 {
    let n = x.len() as f64;
    let norm = ln_gamma(0.5 * (df + 1.0))
        - ln_gamma(0.5 * df)
        - 0.5 * (df * std::f64::consts::PI).ln()
        - scale.ln();
    let kern: f64 = x.iter().map(|v| (1.0 + ((v - loc) / scale).powi(2) / df).ln()).sum();
    n * norm - 0.5 * (df + 1.0) * kern
}

/// Location and scale maximizing the likelihood at fixed `df`, by the
/// scale-mixture EM iteration.
fn fit_fixed_df(x: &[f64], df: f64, start: (f64, f64)) -> Result<(f64, f64)> {
    let (mut loc, mut scale) = start;
    let n = x.len() as f64;
    for _ in 0..ECM_MAX_ITER {
        let (mut sw, mut swx) = (0.0, 0.0);
        let inv = 1.0 / (scale * scale);
        let w: Vec<f64> = x.iter().map(|v| (df + 1.0) / (df + (v - loc).powi(2) * inv)).collect();
        for (wi, v) in w.iter().zip(x) {
            sw += wi;
            swx += wi * v;
        }
        let new_loc = swx / sw;
        let ss: f64 = w.iter().zip(x).map(|(wi, v)| wi * (v - new_loc).powi(2)).sum();
        let new_scale = (ss / n).sqrt();
        let change = (new_loc - loc).abs() / scale + (new_scale / scale - 1.0).abs();
        loc = new_loc;
        scale = new_scale;
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::NoConvergence(format!(
                "t fit collapsed at df = {df:.3} (scale {scale})"
            )));
        }
        if change < ECM_TOL {
            return Ok((loc, scale));
        }
    }
    Err(Error::NoConvergence(format!(
        "t location/scale iteration did not settle within {ECM_MAX_ITER} steps at df = {df:.3}"
    )))
}

/// Maximum-likelihood location-scale t with `df` bounded to `[2, 200]`: the
/// profile likelihood in `log df` is maximized by golden-section search.
pub fn fit_t_ml(draws: &DrawVector<f64>) -> Result<ParametricFit> {
    check_draws(draws, MIN_FIT_DRAWS)?;
    let x = draws.values();
    let (m, s) = nondegenerate_moments(x)?;
    let mut start = (m, s);
    let mut profile = |u: f64| -> Result<(f64, f64, f64)> {
        let df = u.exp();
        let (loc, scale) = fit_fixed_df(x, df, start)?;
        start = (loc, scale);
        Ok((t_log_lik(x, loc, scale, df), loc, scale))
    };

    let (mut a, mut b) = (DF_MIN.ln(), DF_MAX.ln());
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = profile(c)?;
    let mut fd = profile(d)?;
    while b - a > GOLDEN_TOL {
        if fc.0 > fd.0 {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = profile(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = profile(d)?;
        }
    }
    let mut best = if fc.0 > fd.0 { (c, fc) } else { (d, fd) };
    for u in [DF_MIN.ln(), DF_MAX.ln()] {
        let f = profile(u)?;
        if f.0 > best.1 .0 {
            best = (u, f);
        }
    }
    let (u, (ll, location, scale)) = best;
    let df = u.exp().clamp(DF_MIN, DF_MAX);
    ParametricFit::new(Distribution::StudentT { df, location, scale }, ll, 3)
}
