use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{c, from_usize, Scalar};

pub const MIN_INTERVAL_DRAWS: usize = 50;
pub const MIN_KDE_DRAWS: usize = 200;

/// Ordered list of finite draws with optional per-draw chain labels.
#[derive(Debug, Clone, PartialEq)]
pub struct DrawVector<F> {
    values: Vec<F>,
    chain_id: Option<Vec<u32>>,
}

impl<F: Scalar> DrawVector<F> {
    pub fn new(values: Vec<F>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InsufficientDraws { needed: 1, got: 0 });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("draws must be finite".into()));
        }
        Ok(DrawVector { values, chain_id: None })
    }

    pub fn with_chains(values: Vec<F>, chain_id: Vec<u32>) -> Result<Self> {
        if chain_id.len() != values.len() {
            return Err(Error::InvalidParameter("chain labels must match draws".into()));
        }
        let mut d = Self::new(values)?;
        d.chain_id = Some(chain_id);
        Ok(d)
    }

    pub fn values(&self) -> &[F] {
        &self.values
    }

    pub fn chain_ids(&self) -> Option<&[u32]> {
        self.chain_id.as_deref()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> F {
        mean(&self.values)
    }

    /// Sample standard deviation with divisor n - 1.
    pub fn sd(&self) -> F {
        sd(&self.values)
    }

    pub fn sorted(&self) -> Vec<F> {
        let mut v = self.values.clone();
        v.sort_by(|a, b| a.partial_cmp(b).expect("finite draws"));
        v
    }

    pub fn median(&self) -> F {
        quantile_sorted(&self.sorted(), c(0.5))
    }

    pub fn map(&self, f: impl Fn(F) -> F) -> Result<Self> {
        let mut d = DrawVector::new(self.values.iter().map(|&v| f(v)).collect())?;
        d.chain_id = self.chain_id.clone();
        Ok(d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalKind {
    Hdi,
    Quantile,
    Confidence,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalEstimate<F> {
    pub lower: F,
    pub upper: F,
    pub level: F,
    pub kind: IntervalKind,
}

impl<F: Scalar> IntervalEstimate<F> {
    pub fn new(lower: F, upper: F, level: F, kind: IntervalKind) -> Result<Self> {
        if !(lower <= upper) {
            return Err(Error::InvalidParameter(format!("interval [{lower}, {upper}] inverted")));
        }
        check_level(level)?;
        Ok(IntervalEstimate { lower, upper, level, kind })
    }

    pub fn width(&self) -> F {
        self.upper - self.lower
    }

    pub fn contains(&self, x: F) -> bool {
        self.lower <= x && x <= self.upper
    }

    /// True when the interval lies entirely outside `[lo, hi]`.
    pub fn excludes_region(&self, lo: F, hi: F) -> bool {
        self.lower > hi || self.upper < lo
    }
}

fn check_level<F: Scalar>(level: F) -> Result<()> {
    if level > F::zero() && level < F::one() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("level {level} outside (0, 1)")))
    }
}

pub fn mean<F: Scalar>(xs: &[F]) -> F {
    xs.iter().fold(F::zero(), |a, &b| a + b) / from_usize(xs.len())
}

pub fn variance<F: Scalar>(xs: &[F]) -> F {
    if xs.len() < 2 {
        return F::zero();
    }
    let m = mean(xs);
    xs.iter().fold(F::zero(), |a, &x| a + (x - m) * (x - m)) / from_usize(xs.len() - 1)
}

pub fn sd<F: Scalar>(xs: &[F]) -> F {
    variance(xs).sqrt()
}

/// Type-7 (linear interpolation) empirical quantile of already sorted data.
pub fn quantile_sorted<F: Scalar>(sorted: &[F], p: F) -> F {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = from_usize::<F>(n - 1) * p;
    let lo = h.floor();
    let i = lo.to_usize().unwrap_or(0).min(n - 1);
    if i + 1 >= n {
        return sorted[n - 1];
    }
    sorted[i] + (h - lo) * (sorted[i + 1] - sorted[i])
}

pub fn quantile<F: Scalar>(xs: &[F], p: F) -> F {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    quantile_sorted(&v, p)
}

/// Shortest contiguous window over the sorted draws holding `ceil(level * n)` of them.
pub fn hdi<F: Scalar>(draws: &DrawVector<F>, level: F) -> Result<IntervalEstimate<F>> {
    check_level(level)?;
    if draws.len() < MIN_INTERVAL_DRAWS {
        return Err(Error::InsufficientDraws { needed: MIN_INTERVAL_DRAWS, got: draws.len() });
    }
    let sorted = draws.sorted();
    let n = sorted.len();
    let m = (level * from_usize(n)).ceil().to_usize().unwrap_or(n).clamp(1, n);
    let mut best = 0;
    let mut best_width = F::infinity();
    for i in 0..=(n - m) {
        let w = sorted[i + m - 1] - sorted[i];
        if w < best_width {
            best_width = w;
            best = i;
        }
    }
    IntervalEstimate::new(sorted[best], sorted[best + m - 1], level, IntervalKind::Hdi)
}

/// Equal-tailed interval from the type-7 empirical quantiles.
pub fn quantile_interval<F: Scalar>(
    draws: &DrawVector<F>,
    level: F,
) -> Result<IntervalEstimate<F>> {
    check_level(level)?;
    if draws.len() < MIN_INTERVAL_DRAWS {
        return Err(Error::InsufficientDraws { needed: MIN_INTERVAL_DRAWS, got: draws.len() });
    }
    let sorted = draws.sorted();
    let tail = (F::one() - level) * c(0.5);
    IntervalEstimate::new(
        quantile_sorted(&sorted, tail),
        quantile_sorted(&sorted, F::one() - tail),
        level,
        IntervalKind::Quantile,
    )
}

/// Silverman's rule-of-thumb bandwidth `0.9 min(sd, IQR/1.34) n^(-1/5)`.
pub fn silverman_bandwidth<F: Scalar>(draws: &DrawVector<F>) -> Result<F> {
    let sorted = draws.sorted();
    let s = draws.sd();
    let iqr = quantile_sorted(&sorted, c(0.75)) - quantile_sorted(&sorted, c(0.25));
    let spread = if iqr > F::zero() { s.min(iqr / c(1.34)) } else { s };
    if !(spread > F::zero()) {
        return Err(Error::DegenerateBandwidth);
    }
    Ok(c::<F>(0.9) * spread * from_usize::<F>(draws.len()).powf(c(-0.2)))
}

/// Gaussian kernel density estimate at `x`.
pub fn kde_density_at<F: Scalar>(draws: &DrawVector<F>, x: F) -> Result<F> {
    if draws.len() < MIN_KDE_DRAWS {
        return Err(Error::InsufficientDraws { needed: MIN_KDE_DRAWS, got: draws.len() });
    }
    let h = silverman_bandwidth(draws)?;
    let norm = F::one() / (h * F::TAU().sqrt() * from_usize(draws.len()));
    let half = c::<F>(0.5);
    let sum = draws.values().iter().fold(F::zero(), |acc, &v| {
        let z = (x - v) / h;
        acc + (-half * z * z).exp()
    });
    Ok(sum * norm)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn type7_quantiles_on_integers() {
        let d = DrawVector::new((1..=100).map(|i| i as f64).collect()).unwrap();
        let q = quantile_interval(&d, 0.5).unwrap();
        assert!((q.lower - 25.75).abs() < 1e-12);
        assert!((q.upper - 75.25).abs() < 1e-12);
        assert_eq!(q.kind, IntervalKind::Quantile);
        assert!(q.contains(d.median()));
    }

    #[test]
    fn constant_draws_give_point_hdi() {
        let d = DrawVector::new(vec![3.5_f64; 80]).unwrap();
        let h = hdi(&d, 0.9).unwrap();
        assert_eq!((h.lower, h.upper), (3.5, 3.5));
    }

    #[test]
    fn too_few_draws() {
        let d = DrawVector::new(vec![1.0_f64; 49]).unwrap();
        assert!(matches!(hdi(&d, 0.95), Err(Error::InsufficientDraws { .. })));
        assert!(matches!(quantile_interval(&d, 0.95), Err(Error::InsufficientDraws { .. })));
        assert!(kde_density_at(&d, 0.0).is_err());
    }

    #[test]
    fn draw_vector_rejects_non_finite() {
        assert!(DrawVector::new(vec![1.0_f64, f64::NAN]).is_err());
        assert!(DrawVector::<f64>::new(vec![]).is_err());
    }

    #[test]
    fn zero_spread_bandwidth_is_an_error() {
        let d = DrawVector::new(vec![2.0_f64; 300]).unwrap();
        assert!(matches!(kde_density_at(&d, 2.0), Err(Error::DegenerateBandwidth)));
    }

    #[test]
    fn interval_region_exclusion() {
        let i = IntervalEstimate::new(0.2, 1.4, 0.95, IntervalKind::Hdi).unwrap();
        assert!(i.excludes_region(-0.1, 0.1));
        let j = IntervalEstimate::new(-0.1, 1.4, 0.95, IntervalKind::Hdi).unwrap();
        assert!(!j.excludes_region(0.0, 0.0));
        assert!(IntervalEstimate::new(1.0, 0.0, 0.95, IntervalKind::Hdi).is_err());
    }

    #[test]
    fn hdi_in_single_precision() {
        let d = DrawVector::new((0..200).map(|i| i as f32).collect()).unwrap();
        let h = hdi(&d, 0.5_f32).unwrap();
        assert_eq!(h.width(), 99.0);
    }
}
