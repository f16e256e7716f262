use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::DrawVector;

/// Post-warmup draws of every parameter, stored chain after chain.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    names: Vec<String>,
    values: Vec<Vec<f64>>,
    chains: usize,
    warmup: usize,
    draws_per_chain: usize,
}

#[derive(Serialize, Deserialize)]
struct DrawRow {
    parameter: String,
    chain: usize,
    iteration: usize,
    value: f64,
}

impl PosteriorDraws {
    /// `values[p]` holds parameter `p`, chain-major, `chains * draws_per_chain` long.
    pub fn new(
        names: Vec<String>,
        values: Vec<Vec<f64>>,
        chains: usize,
        warmup: usize,
        draws_per_chain: usize,
    ) -> Result<Self> {
        if names.len() != values.len() || chains == 0 || draws_per_chain == 0 {
            return Err(Error::InvalidParameter("malformed draw matrix".into()));
        }
        if values.iter().any(|v| v.len() != chains * draws_per_chain) {
            return Err(Error::InvalidParameter("all parameters need the same draw count".into()));
        }
        Ok(PosteriorDraws { names, values, chains, warmup, draws_per_chain })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn chains(&self) -> usize {
        self.chains
    }

    pub fn warmup(&self) -> usize {
        self.warmup
    }

    pub fn draws_per_chain(&self) -> usize {
        self.draws_per_chain
    }

    pub fn len(&self) -> usize {
        self.chains * self.draws_per_chain
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn index(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    pub fn values(&self, name: &str) -> Result<&[f64]> {
        Ok(&self.values[self.index(name)?])
    }

    pub fn chain_slices(&self, name: &str) -> Result<Vec<&[f64]>> {
        let v = self.values(name)?;
        Ok(v.chunks(self.draws_per_chain).collect())
    }

    pub fn get(&self, name: &str) -> Result<DrawVector<f64>> {
        let chain_id = (0..self.chains as u32)
            .flat_map(|c| std::iter::repeat_n(c, self.draws_per_chain))
            .collect();
        DrawVector::with_chains(self.values(name)?.to_vec(), chain_id)
    }

    /// Applies `f` draw by draw to the named parameters.
    pub fn derive(&self, inputs: &[&str], f: impl Fn(&[f64]) -> f64) -> Result<DrawVector<f64>> {
        let cols: Vec<&[f64]> = inputs.iter().map(|n| self.values(n)).collect::<Result<_>>()?;
        let mut buf = vec![0.0; cols.len()];
        let out = (0..self.len())
            .map(|i| {
                for (b, c) in buf.iter_mut().zip(&cols) {
                    *b = c[i];
                }
                f(&buf)
            })
            .collect();
        DrawVector::new(out)
    }

    /// Long format: `parameter,chain,iteration,value`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        for (name, vals) in self.names.iter().zip(&self.values) {
            for (k, &value) in vals.iter().enumerate() {
                wtr.serialize(DrawRow {
                    parameter: name.clone(),
                    chain: k / self.draws_per_chain,
                    iteration: k % self.draws_per_chain,
                    value,
                })?;
            }
        }
        wtr.flush().map_err(|e| Error::io("draws.csv", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R, warmup: usize) -> Result<Self> {
        let mut names: Vec<String> = Vec::new();
        let mut cols: Vec<Vec<(usize, usize, f64)>> = Vec::new();
        for row in csv::Reader::from_reader(r).deserialize() {
            let row: DrawRow = row?;
            let p = match names.iter().position(|n| *n == row.parameter) {
                Some(p) => p,
                None => {
                    names.push(row.parameter.clone());
                    cols.push(Vec::new());
                    names.len() - 1
                }
            };
            cols[p].push((row.chain, row.iteration, row.value));
        }
        let first = cols.first().ok_or_else(|| Error::Validation("no draws".into()))?;
        let chains = first.iter().map(|r| r.0).max().unwrap_or(0) + 1;
        let per = first.iter().map(|r| r.1).max().unwrap_or(0) + 1;
        let mut values = Vec::with_capacity(cols.len());
        for (name, col) in names.iter().zip(cols) {
            let mut v = vec![f64::NAN; chains * per];
            for (c, i, x) in col {
                if c >= chains || i >= per {
                    return Err(Error::Validation(format!("ragged draws for {name}")));
                }
                v[c * per + i] = x;
            }
            if v.iter().any(|x| x.is_nan()) {
                return Err(Error::Validation(format!("missing draws for {name}")));
            }
            values.push(v);
        }
        PosteriorDraws::new(names, values, chains, warmup, per)
    }
}
