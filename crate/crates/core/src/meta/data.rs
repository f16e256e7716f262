use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Operation group of a historical animal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Op {
    None,
    Ovx,
    Sham,
}

impl Op {
    pub const ALL: [Op; 3] = [Op::None, Op::Ovx, Op::Sham];

    pub fn as_str(self) -> &'static str {
        match self {
            Op::None => "None",
            Op::Ovx => "Ovx",
            Op::Sham => "Sham",
        }
    }

    /// Suffix used in coefficient names (`beta_ovx`, `lambda_sham`).
    pub fn key(self) -> &'static str {
        match self {
            Op::None => "none",
            Op::Ovx => "ovx",
            Op::Sham => "sham",
        }
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Op {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" => Ok(Op::None),
            "ovx" => Ok(Op::Ovx),
            "sham" => Ok(Op::Sham),
            _ => Err(Error::UnknownOp(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Row {
    Individual { experiment: String, strain: String, op: Op, y: f64 },
    Summary { experiment: String, strain: String, op: Op, n: usize, mean: f64, sd: f64 },
}

impl Row {
    pub fn key(&self) -> (&str, &str, Op) {
        match self {
            Row::Individual { experiment, strain, op, .. }
            | Row::Summary { experiment, strain, op, .. } => (experiment, strain, *op),
        }
    }

    pub fn n(&self) -> usize {
        match self {
            Row::Individual { .. } => 1,
            Row::Summary { n, .. } => *n,
        }
    }
}

/// Sufficient statistics of one (experiment, strain, op) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellStats {
    pub experiment: String,
    pub strain: String,
    pub op: Op,
    pub n: usize,
    pub mean: f64,
    pub sse: f64,
}

impl CellStats {
    pub fn sd(&self) -> Option<f64> {
        (self.n >= 2).then(|| (self.sse / (self.n - 1) as f64).sqrt())
    }
}

/// Historical outcomes on the analysis scale, as individual values and/or
/// per-group summaries.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoricalDataset {
    rows: Vec<Row>,
    log_scale: bool,
}

impl HistoricalDataset {
    pub fn new(rows: Vec<Row>, log_scale: bool) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Validation("no rows".into()));
        }
        let mut summaries = BTreeSet::new();
        for (i, row) in rows.iter().enumerate() {
            match row {
                Row::Individual { y, .. } if !y.is_finite() => {
                    return Err(Error::Validation(format!("row {}: non-finite value", i + 1)))
                }
                Row::Summary { n, mean, sd, .. } => {
                    if *n == 0 {
                        return Err(Error::Validation(format!("row {}: n must be >= 1", i + 1)));
                    }
                    if !mean.is_finite() || !sd.is_finite() || *sd < 0.0 {
                        return Err(Error::Validation(format!(
                            "row {}: mean must be finite and sd nonnegative",
                            i + 1
                        )));
                    }
                    if *n == 1 && *sd != 0.0 {
                        return Err(Error::Validation(format!(
                            "row {}: a single observation cannot have a standard deviation",
                            i + 1
                        )));
                    }
                    let (e, s, o) = row.key();
                    if !summaries.insert((e.to_string(), s.to_string(), o)) {
                        return Err(Error::Validation(format!(
                            "row {}: duplicate summary for ({e}, {s}, {o})",
                            i + 1
                        )));
                    }
                }
                _ => {}
            }
        }
        Ok(HistoricalDataset { rows, log_scale })
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn is_log_scale(&self) -> bool {
        self.log_scale
    }

    pub fn total_n(&self) -> usize {
        self.rows.iter().map(Row::n).sum()
    }

    /// Strain labels in sorted order; the index of a strain is its random-effect level.
    pub fn strains(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.rows.iter().map(|r| r.key().1).collect();
        set.into_iter().map(String::from).collect()
    }

    pub fn ops(&self) -> BTreeSet<Op> {
        self.rows.iter().map(|r| r.key().2).collect()
    }

    /// One cell per (experiment, strain, op), pooling individual rows and
    /// combining them with a summary row of the same key when both exist.
    pub fn cells(&self) -> Vec<CellStats> {
        let mut acc: BTreeMap<(String, String, Op), (usize, f64, f64)> = BTreeMap::new();
        for row in &self.rows {
            let (e, s, o) = row.key();
            let (n2, m2, sse2) = match row {
                Row::Individual { y, .. } => (1, *y, 0.0),
                Row::Summary { n, mean, sd, .. } => (*n, *mean, (*n as f64 - 1.0) * sd * sd),
            };
            let entry = acc.entry((e.to_string(), s.to_string(), o)).or_insert((0, 0.0, 0.0));
            let (n1, m1, sse1) = *entry;
            let n = n1 + n2;
            let delta = m2 - m1;
            let mean = m1 + delta * n2 as f64 / n as f64;
            let sse = sse1 + sse2 + delta * delta * (n1 * n2) as f64 / n as f64;
            *entry = (n, mean, sse);
        }
        acc.into_iter()
            .map(|((experiment, strain, op), (n, mean, sse))| CellStats {
                experiment,
                strain,
                op,
                n,
                mean,
                sse,
            })
            .collect()
    }

    /// Pooled mean of all observations in an operation group.
    pub fn op_mean(&self, op: Op) -> Option<f64> {
        let cells: Vec<_> = self.cells().into_iter().filter(|c| c.op == op).collect();
        let n: usize = cells.iter().map(|c| c.n).sum();
        (n > 0).then(|| cells.iter().map(|c| c.n as f64 * c.mean).sum::<f64>() / n as f64)
    }
}
