//! Special functions backing the distribution layer: log-gamma, the incomplete
//! gamma and beta functions, the normal cdf/quantile, and a bracketing root finder.

use crate::error::{Error, Result};
use crate::scalar::{c, Scalar};

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function (Lanczos approximation, reflection below 1/2).
pub fn ln_gamma<F: Scalar>(x: F) -> F {
    if x < c(0.5) {
        let pi = F::PI();
        return (pi / (pi * x).sin().abs()).ln() - ln_gamma(F::one() - x);
    }
    let x = x - F::one();
    let mut a = c::<F>(LANCZOS[0]);
    for (i, &coef) in LANCZOS.iter().enumerate().skip(1) {
        a = a + c::<F>(coef) / (x + c(i as f64));
    }
    let t = x + c(LANCZOS_G + 0.5);
    c::<F>(0.5) * (F::TAU()).ln() + (x + c(0.5)) * t.ln() - t + a.ln()
}

fn max_iter<F: Scalar>(a: F) -> usize {
    // continued fractions need O(sqrt(max(a, b))) terms
    let extra = a.abs().sqrt().to_usize().unwrap_or(0);
    500 + 10 * extra
}

/// Regularized lower incomplete gamma function P(a, x).
pub fn gamma_p<F: Scalar>(a: F, x: F) -> F {
    if x <= F::zero() {
        return F::zero();
    }
    if x < a + F::one() {
        gamma_series(a, x)
    } else {
        F::one() - gamma_cf(a, x)
    }
}

/// Regularized upper incomplete gamma function Q(a, x).
pub fn gamma_q<F: Scalar>(a: F, x: F) -> F {
    if x <= F::zero() {
        return F::one();
    }
    if x < a + F::one() {
        F::one() - gamma_series(a, x)
    } else {
        gamma_cf(a, x)
    }
}

fn gamma_series<F: Scalar>(a: F, x: F) -> F {
    let mut ap = a;
    let mut sum = F::one() / a;
    let mut del = sum;
    for _ in 0..max_iter(a) {
        ap = ap + F::one();
        del = del * x / ap;
        sum = sum + del;
        if del.abs() < sum.abs() * F::epsilon() {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

fn gamma_cf<F: Scalar>(a: F, x: F) -> F {
    let tiny = F::min_positive_value() / F::epsilon();
    let mut b = x + F::one() - a;
    let mut cc = F::one() / tiny;
    let mut d = F::one() / b;
    let mut h = d;
    for i in 1..max_iter(a) {
        let an = -c::<F>(i as f64) * (c::<F>(i as f64) - a);
        b = b + c(2.0);
        d = an * d + b;
        if d.abs() < tiny {
            d = tiny;
        }
        cc = b + an / cc;
        if cc.abs() < tiny {
            cc = tiny;
        }
        d = F::one() / d;
        let del = d * cc;
        h = h * del;
        if (del - F::one()).abs() < F::epsilon() {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

pub fn erf<F: Scalar>(x: F) -> F {
    if x < F::zero() {
        -gamma_p(c(0.5), x * x)
    } else {
        gamma_p(c(0.5), x * x)
    }
}

pub fn erfc<F: Scalar>(x: F) -> F {
    if x < F::zero() {
        c::<F>(2.0) - gamma_q(c(0.5), x * x)
    } else {
        gamma_q(c(0.5), x * x)
    }
}

/// Standard normal cdf.
pub fn norm_cdf<F: Scalar>(x: F) -> F {
    c::<F>(0.5) * erfc(-x / F::SQRT_2())
}

/// Standard normal upper tail, accurate far into the right tail.
pub fn norm_sf<F: Scalar>(x: F) -> F {
    c::<F>(0.5) * erfc(x / F::SQRT_2())
}

pub fn norm_pdf<F: Scalar>(x: F) -> F {
    (-c::<F>(0.5) * x * x).exp() / (F::TAU()).sqrt()
}

/// Standard normal quantile: Acklam's rational approximation refined by one Halley step.
pub fn norm_quantile<F: Scalar>(p: F) -> F {
    if p <= F::zero() {
        return F::neg_infinity();
    }
    if p >= F::one() {
        return F::infinity();
    }
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    let pf = p.to_f64().unwrap_or(0.5);
    let plow = 0.024_25;
    let x0 = if pf < plow {
        let q = (-2.0 * pf.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if pf <= 1.0 - plow {
        let q = pf - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - pf).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let mut x = c::<F>(x0);
    for _ in 0..2 {
        let e = if x > F::zero() { (F::one() - p) - norm_sf(x) } else { norm_cdf(x) - p };
        let u = e * F::TAU().sqrt() * (x * x * c(0.5)).exp();
        x = x - u / (F::one() + x * u * c(0.5));
    }
    x
}

/// Regularized incomplete beta function I_x(a, b).
pub fn beta_inc<F: Scalar>(a: F, b: F, x: F) -> F {
    if x <= F::zero() {
        return F::zero();
    }
    if x >= F::one() {
        return F::one();
    }
    let ln_bt = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (F::one() - x).ln();
    let bt = ln_bt.exp();
    if x < (a + F::one()) / (a + b + c(2.0)) {
        bt * beta_cf(a, b, x) / a
    } else {
        F::one() - bt * beta_cf(b, a, F::one() - x) / b
    }
}

fn beta_cf<F: Scalar>(a: F, b: F, x: F) -> F {
    let tiny = F::min_positive_value() / F::epsilon();
    let qab = a + b;
    let qap = a + F::one();
    let qam = a - F::one();
    let mut cc = F::one();
    let mut d = F::one() - qab * x / qap;
    if d.abs() < tiny {
        d = tiny;
    }
    d = F::one() / d;
    let mut h = d;
    for m in 1..max_iter(a.max(b)) {
        let m = c::<F>(m as f64);
        let m2 = m + m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = F::one() + aa * d;
        if d.abs() < tiny {
            d = tiny;
        }
        cc = F::one() + aa / cc;
        if cc.abs() < tiny {
            cc = tiny;
        }
        d = F::one() / d;
        h = h * d * cc;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = F::one() + aa * d;
        if d.abs() < tiny {
            d = tiny;
        }
        cc = F::one() + aa / cc;
        if cc.abs() < tiny {
            cc = tiny;
        }
        d = F::one() / d;
        let del = d * cc;
        h = h * del;
        if (del - F::one()).abs() < F::epsilon() {
            break;
        }
    }
    h
}

/// Brent's method on a bracket `[lo, hi]` with `f(lo)` and `f(hi)` of opposite sign.
pub fn brent<F: Scalar>(mut f: impl FnMut(F) -> F, lo: F, hi: F, xtol: F) -> Result<F> {
    let (mut a, mut b) = (lo, hi);
    let (mut fa, mut fb) = (f(a), f(b));
    if fa == F::zero() {
        return Ok(a);
    }
    if fb == F::zero() {
        return Ok(b);
    }
    if (fa > F::zero()) == (fb > F::zero()) {
        return Err(Error::Numerical(format!("root not bracketed on [{lo}, {hi}]")));
    }
    let two = c::<F>(2.0);
    let mut cc = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..300 {
        if (fb > F::zero()) == (fc > F::zero()) {
            cc = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = cc;
            cc = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = two * F::epsilon() * b.abs() + xtol / two;
        let xm = (cc - b) / two;
        if xm.abs() <= tol1 || fb == F::zero() {
            return Ok(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == cc {
                p = two * xm * s;
                q = F::one() - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (two * xm * qq * (qq - r) - (b - a) * (r - F::one()));
                q = (qq - F::one()) * (r - F::one()) * (s - F::one());
            }
            if p > F::zero() {
                q = -q;
            }
            p = p.abs();
            let min1 = c::<F>(3.0) * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if two * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b = if d.abs() > tol1 {
            b + d
        } else if xm > F::zero() {
            b + tol1
        } else {
            b - tol1
        };
        fb = f(b);
    }
    Err(Error::Numerical("root finder exceeded iteration budget".into()))
}
