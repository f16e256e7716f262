//! Noncentral t distribution function.
//!
//! Poisson-weighted incomplete-beta series summed outward from the Poisson mode
//! (Benton & Krishnamoorthy), which stays stable for large noncentrality.

use super::special::{beta_inc, ln_gamma, norm_cdf};
use crate::scalar::{c, Scalar};

const MAX_TERMS: usize = 20_000;

/// P(T <= t) for T ~ t(df, ncp).
pub fn cdf<F: Scalar>(t: F, df: F, ncp: F) -> F {
    let v =
        if t < F::zero() { F::one() - cdf_nonneg(-t, df, -ncp) } else { cdf_nonneg(t, df, ncp) };
    v.max(F::zero()).min(F::one())
}

fn cdf_nonneg<F: Scalar>(t: F, df: F, ncp: F) -> F {
    let base = norm_cdf(-ncp);
    if t == F::zero() {
        return base;
    }
    let half = c::<F>(0.5);
    let x = t * t / (t * t + df);
    let b = df * half;
    let lam = ncp * ncp * half;
    let eps = c::<F>(1e-15);
    let scale_q = ncp / F::SQRT_2();

    let k = lam.floor();
    let ln_lam = if lam > F::zero() { lam.ln() } else { F::zero() };
    let (pk, qk) = if lam > F::zero() {
        (
            (-lam + k * ln_lam - ln_gamma(k + F::one())).exp(),
            (-lam + k * ln_lam - ln_gamma(k + c(1.5))).exp(),
        )
    } else {
        (F::one(), (-ln_gamma(c::<F>(1.5))).exp())
    };

    let ln_x = x.ln();
    let ln_1mx = (F::one() - x).ln();
    let g_at = |a: F| {
        (ln_gamma(a + b) - ln_gamma(a + F::one()) - ln_gamma(b) + a * ln_x + b * ln_1mx).exp()
    };

    let ap0 = k + half;
    let aq0 = k + F::one();
    let ixp0 = beta_inc(ap0, b, x);
    let ixq0 = beta_inc(aq0, b, x);
    let gp0 = g_at(ap0);
    let gq0 = g_at(aq0);

    let mut sum = pk * ixp0 + scale_q * qk * ixq0;

    // forward from the mode
    let (mut p, mut q) = (pk, qk);
    let (mut ixp, mut ixq) = (ixp0, ixq0);
    let (mut gp, mut gq) = (gp0, gq0);
    let (mut ap, mut aq) = (ap0, aq0);
    let mut i = k;
    for _ in 0..MAX_TERMS {
        ixp = ixp - gp;
        ixq = ixq - gq;
        gp = gp * x * (ap + b) / (ap + F::one());
        gq = gq * x * (aq + b) / (aq + F::one());
        ap = ap + F::one();
        aq = aq + F::one();
        i = i + F::one();
        if lam > F::zero() {
            p = p * lam / i;
            q = q * lam / (i + half);
        } else {
            break;
        }
        let term = p * ixp + scale_q * q * ixq;
        sum = sum + term;
        if i > lam && term.abs() <= eps * sum.abs().max(c(1e-300)) && p < eps {
            break;
        }
    }

    // backward from the mode
    let (mut p, mut q) = (pk, qk);
    let (mut ixp, mut ixq) = (ixp0, ixq0);
    let (mut gp, mut gq) = (gp0, gq0);
    let (mut ap, mut aq) = (ap0, aq0);
    let mut i = k;
    while i > F::zero() {
        // g(a-1) = g(a) * a / (x (a + b - 1))
        gp = gp * ap / (x * (ap + b - F::one()));
        gq = gq * aq / (x * (aq + b - F::one()));
        ap = ap - F::one();
        aq = aq - F::one();
        ixp = ixp + gp;
        ixq = ixq + gq;
        p = p * i / lam;
        q = q * (i + half) / lam;
        i = i - F::one();
        let term = p * ixp + scale_q * q * ixq;
        sum = sum + term;
        if term.abs() <= eps * sum.abs().max(c(1e-300)) && p < eps {
            break;
        }
    }

    base + half * sum
}
