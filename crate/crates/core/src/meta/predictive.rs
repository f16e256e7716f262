use rand::Rng;
use rand_distr::{Distribution as _, StandardNormal};

use super::{params_at, HistoricalDataset, Op, PriorSet};
use crate::checks::{ReplicateSet, DEFAULT_CLIP};
use crate::error::{Error, Result};
use crate::mcmc::PosteriorDraws;
use crate::stats::{Distribution, RngStream};

/// Strain count assumed for simulated no-operation datasets.
pub const PRIOR_PREDICTIVE_STRAINS: usize = 22;
const MAX_REJECTIONS: usize = 10_000;

fn draw(d: &Distribution<f64>, name: &str, rng: &mut impl Rng) -> Result<f64> {
    if !d.is_proper() {
        return Err(Error::FlatPriorSampled(name.to_string()));
    }
    d.sample(rng)
}

fn draw_nonnegative(d: &Distribution<f64>, name: &str, rng: &mut impl Rng) -> Result<f64> {
    for _ in 0..MAX_REJECTIONS {
        let v = draw(d, name, rng)?;
        if v >= 0.0 {
            return Ok(v);
        }
    }
    Err(Error::InvalidParameter(format!("prior for {name} puts no mass on [0, inf)")))
}

/// `r` simulated no-operation datasets of `k` values: fresh `alpha`, `psi`,
/// `tau` and strain effects per replicate, strains assigned round-robin.
pub fn prior_predictive(
    priors: &PriorSet,
    r: usize,
    k: usize,
    strains: usize,
    stream: RngStream,
) -> Result<ReplicateSet> {
    if r == 0 || k == 0 || strains == 0 {
        return Err(Error::InvalidParameter(
            "replicates, size and strains must be positive".into(),
        ));
    }
    let mut rng = stream.rng();
    let mut reps = Vec::with_capacity(r);
    let mut nu = vec![0.0; strains];
    for _ in 0..r {
        let alpha = draw(&priors.alpha, "alpha", &mut rng)?;
        let psi = draw(&priors.psi, "psi", &mut rng)?;
        let tau = draw_nonnegative(&priors.tau, "tau", &mut rng)?;
        for v in nu.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = tau * z;
        }
        let sigma = psi.exp();
        let rep = (0..k)
            .map(|i| {
                let z: f64 = StandardNormal.sample(&mut rng);
                alpha + nu[i % strains] + sigma * z
            })
            .collect();
        reps.push(rep);
    }
    ReplicateSet::new(reps, DEFAULT_CLIP)
}

/// Replicates of the observed `op` cells, one per selected posterior draw,
/// using the fitted strain effects. Draws are taken evenly spaced.
pub fn posterior_predictive(
    draws: &PosteriorDraws,
    data: &HistoricalDataset,
    op: Op,
    r: usize,
    stream: RngStream,
) -> Result<ReplicateSet> {
    let strains = data.strains();
    let cells: Vec<_> = data.cells().into_iter().filter(|c| c.op == op).collect();
    if cells.is_empty() {
        return Err(Error::Validation(format!("no observations in group {op}")));
    }
    if r == 0 {
        return Err(Error::InvalidParameter("replicates must be positive".into()));
    }
    let mut rng = stream.rng();
    let total = draws.len();
    let mut reps = Vec::with_capacity(r);
    for i in 0..r {
        let p = params_at(draws, data, i * total / r)?;
        let sigma = p.log_sigma(op).exp();
        let mut rep = Vec::new();
        for c in &cells {
            let j = strains.binary_search(&c.strain).expect("strain listed");
            let mu = p.mean(op, p.nu[j]);
            for _ in 0..c.n {
                let z: f64 = StandardNormal.sample(&mut rng);
                rep.push(mu + sigma * z);
            }
        }
        reps.push(rep);
    }
    ReplicateSet::new(reps, DEFAULT_CLIP)
}
