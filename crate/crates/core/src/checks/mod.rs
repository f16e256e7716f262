//! Summaries for prior and posterior predictive checks: per-bin frequency
//! bands over replicate histograms and per-replicate mean/sd distributions.

use serde::{Deserialize, Serialize};

use std::io::Write;

use crate::error::{Error, Result};
use crate::stats::{quantile_sorted, DrawVector};

pub const DEFAULT_CLIP: f64 = 50.0;
pub const DEFAULT_BINS: usize = 60;
pub const MIN_REPLICATES: usize = 10;
/// Central intervals reported per bin, widest first.
pub const BAND_LEVELS: [(f64, f64); 4] = [(0.1, 0.9), (0.2, 0.8), (0.3, 0.7), (0.4, 0.6)];
const FREQ_QUANTILES: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

pub fn clip(x: f64, bound: f64) -> f64 {
    x.clamp(-bound, bound)
}

/// Replicate datasets drawn from a predictive distribution. Values are stored
/// unclipped; `clip_bound` applies to display summaries only.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateSet {
    replicates: Vec<Vec<f64>>,
    clip_bound: f64,
}

impl ReplicateSet {
    pub fn new(replicates: Vec<Vec<f64>>, clip_bound: f64) -> Result<Self> {
        if replicates.is_empty() || replicates.iter().any(Vec::is_empty) {
            return Err(Error::InvalidParameter("need at least one non-empty replicate".into()));
        }
        if !(clip_bound > 0.0) {
            return Err(Error::InvalidParameter("clip bound must be positive".into()));
        }
        if replicates.iter().flatten().any(|v| v.is_nan()) {
            return Err(Error::InvalidParameter("replicate values must not be NaN".into()));
        }
        Ok(ReplicateSet { replicates, clip_bound })
    }

    pub fn replicates(&self) -> &[Vec<f64>] {
        &self.replicates
    }

    pub fn len(&self) -> usize {
        self.replicates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.replicates.is_empty()
    }

    pub fn clip_bound(&self) -> f64 {
        self.clip_bound
    }

    pub fn clipped(&self) -> Vec<Vec<f64>> {
        self.replicates
            .iter()
            .map(|r| r.iter().map(|&v| clip(v, self.clip_bound)).collect())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub lower_level: f64,
    pub upper_level: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Per-bin quantiles of histogram counts across replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandSummary {
    pub edges: Vec<f64>,
    pub bands: Vec<Band>,
    pub median: Vec<f64>,
    pub mean: Vec<f64>,
    pub replicates: usize,
}

impl BandSummary {
    pub fn bins(&self) -> usize {
        self.edges.len() - 1
    }

    /// Span of the bins whose upper band frequency is positive, for the band at
    /// index `band` of [`BAND_LEVELS`].
    pub fn support(&self, band: usize) -> Option<(f64, f64)> {
        let upper = &self.bands.get(band)?.upper;
        let first = upper.iter().position(|&f| f > 0.0)?;
        let last = upper.iter().rposition(|&f| f > 0.0)?;
        Some((self.edges[first], self.edges[last + 1]))
    }
}

fn bin_index(x: f64, lo: f64, width: f64, bins: usize) -> usize {
    (((x - lo) / width).floor().max(0.0) as usize).min(bins - 1)
}

/// Histogram frequency bands over `bins` equal-width bins spanning the pooled
/// clipped range.
pub fn histogram_bands(reps: &ReplicateSet, bins: usize) -> Result<BandSummary> {
    if reps.len() < MIN_REPLICATES {
        return Err(Error::InvalidParameter(format!(
            "histogram bands need at least {MIN_REPLICATES} replicates, got {}",
            reps.len()
        )));
    }
    if bins == 0 {
        return Err(Error::InvalidParameter("bins must be positive".into()));
    }
    let clipped = reps.clipped();
    let (mut lo, mut hi) = clipped
        .iter()
        .flatten()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if hi <= lo {
        lo -= 0.5;
        hi += 0.5;
    }
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|i| lo + i as f64 * width).collect();

    // counts[bin][replicate]
    let mut counts = vec![vec![0.0; clipped.len()]; bins];
    for (r, rep) in clipped.iter().enumerate() {
        for &v in rep {
            counts[bin_index(v, lo, width, bins)][r] += 1.0;
        }
    }
    let mut q = vec![vec![0.0; bins]; FREQ_QUANTILES.len()];
    let mut mean = vec![0.0; bins];
    for (b, col) in counts.iter_mut().enumerate() {
        mean[b] = col.iter().sum::<f64>() / col.len() as f64;
        col.sort_by(|a, b| a.total_cmp(b));
        for (qi, &p) in FREQ_QUANTILES.iter().enumerate() {
            q[qi][b] = quantile_sorted(col, p);
        }
    }
    let bands = BAND_LEVELS
        .iter()
        .enumerate()
        .map(|(i, &(l, u))| Band {
            lower_level: l,
            upper_level: u,
            lower: q[i].clone(),
            upper: q[FREQ_QUANTILES.len() - 1 - i].clone(),
        })
        .collect();
    Ok(BandSummary { edges, bands, median: q[4].clone(), mean, replicates: reps.len() })
}

/// Histogram of all replicate values pooled together, on the given edges.
pub fn pooled_histogram(reps: &ReplicateSet, edges: &[f64]) -> Vec<f64> {
    let bins = edges.len() - 1;
    let width = (edges[bins] - edges[0]) / bins as f64;
    let mut out = vec![0.0; bins];
    for v in reps.clipped().iter().flatten() {
        out[bin_index(*v, edges[0], width, bins)] += 1.0;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stat {
    Mean,
    Sd,
}

/// One statistic per replicate, computed on unclipped values.
pub fn stat_distribution(reps: &ReplicateSet, stat: Stat) -> Result<DrawVector<f64>> {
    let values = reps
        .replicates()
        .iter()
        .map(|r| {
            let n = r.len() as f64;
            let m = r.iter().sum::<f64>() / n;
            match stat {
                Stat::Mean => Ok(m),
                Stat::Sd if r.len() >= 2 => {
                    Ok((r.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt())
                }
                Stat::Sd => Err(Error::InvalidParameter(
                    "standard deviation needs at least two values per replicate".into(),
                )),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    DrawVector::new(values)
}

impl Stat {
    pub fn as_str(self) -> &'static str {
        match self {
            Stat::Mean => "mean",
            Stat::Sd => "sd",
        }
    }
}

/// Long-format bands: `source,bin,bin_lower,bin_upper,band,lower,upper`, with
/// the median and mean frequency under bands `median` and `mean`.
pub fn write_bands_csv<W: Write>(sets: &[(&str, &BandSummary)], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["source", "bin", "bin_lower", "bin_upper", "band", "lower", "upper"])?;
    for (source, s) in sets {
        for b in 0..s.bins() {
            let mut row = |band: String, lo: f64, hi: f64| {
                wtr.write_record([
                    source.to_string(),
                    b.to_string(),
                    s.edges[b].to_string(),
                    s.edges[b + 1].to_string(),
                    band,
                    lo.to_string(),
                    hi.to_string(),
                ])
            };
            for band in &s.bands {
                let name = format!(
                    "{}-{}",
                    (band.lower_level * 100.0).round(),
                    (band.upper_level * 100.0).round()
                );
                row(name, band.lower[b], band.upper[b])?;
            }
            row("median".into(), s.median[b], s.median[b])?;
            row("mean".into(), s.mean[b], s.mean[b])?;
        }
    }
    wtr.flush().map_err(|e| Error::io("bands", e))
}

/// Long-format statistics `source,stat,replicate,value,display_value`; the
/// display value is clipped at `clip_bound`.
pub fn write_stats_csv<W: Write>(
    sets: &[(&str, Stat, &DrawVector<f64>)],
    clip_bound: f64,
    w: W,
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["source", "stat", "replicate", "value", "display_value"])?;
    for (source, stat, d) in sets {
        for (i, &v) in d.values().iter().enumerate() {
            wtr.write_record([
                source.to_string(),
                stat.as_str().to_string(),
                i.to_string(),
                v.to_string(),
                clip(v, clip_bound).to_string(),
            ])?;
        }
    }
    wtr.flush().map_err(|e| Error::io("statistics", e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identical_replicates_give_degenerate_bands() {
        let rep = vec![-1.0, 0.0, 0.2, 0.3, 2.0];
        let reps = ReplicateSet::new(vec![rep; 12], DEFAULT_CLIP).unwrap();
        let s = histogram_bands(&reps, 4).unwrap();
        for band in &s.bands {
            assert_eq!(band.lower, band.upper);
            assert_eq!(band.lower, s.median);
        }
        assert_eq!(s.median.iter().sum::<f64>(), 5.0);
    }

    #[test]
    fn too_few_replicates() {
        let reps = ReplicateSet::new(vec![vec![1.0]; 9], DEFAULT_CLIP).unwrap();
        assert!(histogram_bands(&reps, 10).is_err());
    }

    #[test]
    fn constant_replicates_have_zero_sd() {
        let reps = ReplicateSet::new(vec![vec![3.0; 5]; 4], DEFAULT_CLIP).unwrap();
        let sd = stat_distribution(&reps, Stat::Sd).unwrap();
        assert!(sd.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn out_of_range_values_are_clipped_for_display_only() {
        let reps = ReplicateSet::new(vec![vec![-80.0, 0.0, 120.0]], 50.0).unwrap();
        assert_eq!(reps.clipped()[0], vec![-50.0, 0.0, 50.0]);
        let m = stat_distribution(&reps, Stat::Mean).unwrap();
        assert!((m.values()[0] - 40.0 / 3.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn clipping_is_idempotent(x in -1e6f64..1e6, bound in 0.1f64..100.0) {
            prop_assert_eq!(clip(clip(x, bound), bound), clip(x, bound));
        }

        #[test]
        fn bands_nest_and_conserve_mass(
            reps in prop::collection::vec(prop::collection::vec(-70.0f64..70.0, 3..30), 10..25),
            bins in 1usize..40,
        ) {
            let set = ReplicateSet::new(reps, DEFAULT_CLIP).unwrap();
            let s = histogram_bands(&set, bins).unwrap();
            for w in s.bands.windows(2) {
                for b in 0..s.bins() {
                    prop_assert!(w[0].lower[b] <= w[1].lower[b] && w[1].upper[b] <= w[0].upper[b]);
                }
            }
            let inner = s.bands.last().unwrap();
            for b in 0..s.bins() {
                prop_assert!(inner.lower[b] <= s.median[b] && s.median[b] <= inner.upper[b]);
            }
            let pooled = pooled_histogram(&set, &s.edges);
            for (p, m) in pooled.iter().zip(&s.mean) {
                prop_assert!((p - m * set.len() as f64).abs() < 1e-9);
            }
        }
    }
}
