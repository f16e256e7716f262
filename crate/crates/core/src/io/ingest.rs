use std::collections::BTreeSet;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::meta::{HistoricalDataset, Op, Row};

#[derive(Debug, Deserialize)]
struct CsvRow {
    experiment: String,
    strain: String,
    op: String,
    #[serde(default)]
    y: Option<f64>,
    #[serde(default)]
    n: Option<usize>,
    #[serde(default)]
    mean: Option<f64>,
    #[serde(default)]
    sd: Option<f64>,
    #[serde(default)]
    scale: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Scale {
    Log,
    Raw,
    Unstated,
}

fn parse_scale(s: Option<&str>, line: usize) -> Result<Scale> {
    match s.map(|s| s.trim().to_ascii_lowercase()) {
        None => Ok(Scale::Unstated),
        Some(s) if s.is_empty() => Ok(Scale::Unstated),
        Some(s) if s == "log" => Ok(Scale::Log),
        Some(s) if s == "raw" => Ok(Scale::Raw),
        Some(s) => Err(Error::Validation(format!("line {line}: unknown scale `{s}`"))),
    }
}

/// Reads historical data from CSV with columns `experiment,strain,op` plus
/// either `y` (individual value) or `n,mean,sd` (group summary), and an
/// optional `scale` column (`log` or `raw`).
///
/// With `log_transform`, individual values are log-transformed. Summary rows
/// are never transformed: a log-scale mean and sd cannot be recovered from
/// raw-scale summaries, so they must already be marked `scale = log`. All rows
/// must end up on one stated scale.
pub fn parse_historical<R: Read>(reader: R, log_transform: bool) -> Result<HistoricalDataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut rows = Vec::new();
    let mut scales = BTreeSet::new();
    for (i, rec) in rdr.deserialize::<CsvRow>().enumerate() {
        let line = i + 2;
        let rec = rec?;
        let op: Op = rec.op.parse()?;
        let stated = parse_scale(rec.scale.as_deref(), line)?;
        let (row, scale) = match (rec.y, rec.n, rec.mean, rec.sd) {
            (Some(y), None, None, None) => {
                let (y, scale) = if log_transform {
                    if stated == Scale::Log {
                        return Err(Error::Validation(format!(
                            "line {line}: value is already on the log scale; refusing to transform twice"
                        )));
                    }
                    if !(y > 0.0) {
                        return Err(Error::Validation(format!(
                            "line {line}: cannot log-transform non-positive value {y}"
                        )));
                    }
                    (y.ln(), Scale::Log)
                } else {
                    (y, stated)
                };
                let row = Row::Individual { experiment: rec.experiment, strain: rec.strain, op, y };
                (row, scale)
            }
            (None, Some(n), Some(mean), sd) => {
                if log_transform && stated != Scale::Log {
                    return Err(Error::Validation(format!(
                        "line {line}: summary rows cannot be log-transformed; a log-scale mean and sd \
                         are not derivable from raw-scale summaries, so supply them marked scale=log"
                    )));
                }
                let sd = match (sd, n) {
                    (Some(sd), _) => sd,
                    (None, 1) => 0.0,
                    (None, _) => {
                        return Err(Error::Validation(format!(
                            "line {line}: sd missing for n >= 2"
                        )))
                    }
                };
                let row = Row::Summary {
                    experiment: rec.experiment,
                    strain: rec.strain,
                    op,
                    n,
                    mean,
                    sd,
                };
                (row, stated)
            }
            _ => {
                return Err(Error::Validation(format!(
                    "line {line}: give either y or n, mean and sd"
                )))
            }
        };
        scales.insert(scale);
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Validation("no rows".into()));
    }
    if scales.len() > 1 {
        return Err(Error::Validation(
            "rows mix log, raw and unstated scales; state the scale of every row".into(),
        ));
    }
    let log_scale = scales.contains(&Scale::Log);
    HistoricalDataset::new(rows, log_scale)
}

pub fn ingest_historical(path: impl AsRef<Path>, log_transform: bool) -> Result<HistoricalDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_historical(file, log_transform)
}
