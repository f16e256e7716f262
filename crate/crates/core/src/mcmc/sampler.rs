use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::diagnostics::{diagnose, ConvergenceReport, ConvergenceStatus};
use super::draws::PosteriorDraws;
use super::model::{dot, random_effects_ln_density, LinearGaussianModel, State, Term};
use crate::error::{Error, Result};
use crate::stats::{Distribution, Purpose, RngStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McmcSettings {
    pub chains: usize,
    pub warmup: usize,
    pub draws: usize,
    pub seed: u64,
    /// Metropolis updates of the scale block and of `log tau` per sweep.
    #[serde(default = "default_inner_steps")]
    pub inner_steps: usize,
}

pub const DEFAULT_INNER_STEPS: usize = 10;

fn default_inner_steps() -> usize {
    DEFAULT_INNER_STEPS
}

impl Default for McmcSettings {
    fn default() -> Self {
        McmcSettings {
            chains: 4,
            warmup: 1000,
            draws: 1000,
            seed: 1,
            inner_steps: DEFAULT_INNER_STEPS,
        }
    }
}

impl McmcSettings {
    pub fn validate(&self) -> Result<()> {
        if self.chains == 0 || self.draws < 4 || self.inner_steps == 0 {
            return Err(Error::Config(
                "mcmc needs chains >= 1, draws >= 4 and inner_steps >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct McmcFit {
    pub draws: PosteriorDraws,
    pub report: ConvergenceReport,
}

impl McmcFit {
    pub fn is_converged(&self) -> bool {
        self.report.is_converged()
    }
}

const SCALE_TARGET: f64 = 0.3;
const TAU_TARGET: f64 = 0.44;
const INITIAL_STEP: f64 = 0.1;

/// Runs the sampler with chain streams `(seed, 0, 0, Chain(c))`.
pub fn sample(model: &LinearGaussianModel, settings: &McmcSettings) -> Result<McmcFit> {
    sample_stream(model, settings, 0, 0)
}

/// Metropolis-within-Gibbs over three blocks per sweep:
///
/// * location coefficients and random effects jointly from their Gaussian full
///   conditional; non-normal priors enter through a moment-matched normal and an
///   independence Metropolis correction,
/// * log-scale coefficients by adaptive random-walk Metropolis,
/// * `log tau` by random-walk Metropolis with its Jacobian.
///
/// Proposal covariances and step sizes adapt during warmup only. Chains run in
/// parallel, each on its own stream, and are merged in chain order.
pub fn sample_stream(
    model: &LinearGaussianModel,
    settings: &McmcSettings,
    design_id: u64,
    replicate_id: u64,
) -> Result<McmcFit> {
    model.validate()?;
    settings.validate()?;
    let layout = Layout::new(model)?;
    let runs: Vec<ChainOutput> = (0..settings.chains)
        .into_par_iter()
        .map(|c| {
            let stream =
                RngStream::new(settings.seed, design_id, replicate_id, Purpose::Chain(c as u32));
            Chain::new(model, &layout, settings, stream.rng()).run()
        })
        .collect::<Result<_>>()?;

    let names = model.parameter_names();
    let n = settings.draws;
    let mut values = vec![Vec::with_capacity(settings.chains * n); names.len()];
    for run in &runs {
        for row in &run.draws {
            for (col, &v) in values.iter_mut().zip(row) {
                col.push(v);
            }
        }
    }
    let draws = PosteriorDraws::new(names, values, settings.chains, settings.warmup, n)?;
    let parameters: Vec<_> = draws
        .names()
        .iter()
        .map(|name| diagnose(name, &draws.chain_slices(name).expect("known name")))
        .collect();
    let mut acceptance = vec![];
    let blocks = [
        ("location", layout.loc_mh, runs.iter().map(|r| r.acc_loc).sum::<f64>()),
        ("scale", !layout.free_scale.is_empty(), runs.iter().map(|r| r.acc_scale).sum()),
        ("tau", layout.tau_free, runs.iter().map(|r| r.acc_tau).sum()),
    ];
    for (name, active, total) in blocks {
        if active {
            acceptance.push((name.to_string(), total / runs.len() as f64));
        }
    }
    let status = if parameters.iter().any(|p| p.flagged) {
        ConvergenceStatus::NotConverged
    } else {
        ConvergenceStatus::Converged
    };
    Ok(McmcFit { draws, report: ConvergenceReport { parameters, acceptance, status } })
}

/// Index bookkeeping shared by all chains.
struct Layout {
    free_loc: Vec<usize>,
    /// Normal prior (or moment-matched normal) per free location coefficient.
    loc_prior_normal: Vec<Option<(f64, f64)>>,
    loc_mh: bool,
    levels: usize,
    random_active: bool,
    tau_free: bool,
    free_scale: Vec<usize>,
    offsets: Vec<f64>,
}

fn normal_proxy(d: &Distribution<f64>) -> Option<(f64, f64)> {
    match d {
        Distribution::Flat => None,
        Distribution::Normal { mean, sd } => Some((*mean, *sd)),
        other => match (other.mean(), other.variance()) {
            (Ok(m), Ok(v)) if v.is_finite() && v > 0.0 => Some((m, v.sqrt())),
            _ => None,
        },
    }
}

impl Layout {
    fn new(model: &LinearGaussianModel) -> Result<Self> {
        let mut free_loc = vec![];
        let mut loc_prior_normal = vec![];
        let mut loc_mh = false;
        let mut fixed = vec![0.0; model.location.len()];
        for (k, c) in model.location.iter().enumerate() {
            match &c.term {
                Term::Free(d) => {
                    free_loc.push(k);
                    loc_prior_normal.push(normal_proxy(d));
                    loc_mh |= !matches!(d, Distribution::Flat | Distribution::Normal { .. });
                }
                Term::Fixed(v) => fixed[k] = *v,
            }
        }
        let offsets = model.cells.iter().map(|c| dot(&c.loc, &fixed)).collect();
        let free_scale = model
            .scale
            .iter()
            .enumerate()
            .filter(|(_, c)| c.term.is_free())
            .map(|(k, _)| k)
            .collect();
        let (levels, random_active, tau_free) = match &model.random {
            Some(r) => match &r.tau {
                Term::Free(_) => (r.levels.len(), true, true),
                Term::Fixed(t) => (r.levels.len(), *t > 0.0, false),
            },
            None => (0, false, false),
        };
        Ok(Layout {
            free_loc,
            loc_prior_normal,
            loc_mh,
            levels,
            random_active,
            tau_free,
            free_scale,
            offsets,
        })
    }

    fn loc_dim(&self) -> usize {
        self.free_loc.len() + if self.random_active { self.levels } else { 0 }
    }
}

struct ChainOutput {
    draws: Vec<Vec<f64>>,
    acc_loc: f64,
    acc_scale: f64,
    acc_tau: f64,
}

/// Running mean and covariance (Welford).
struct Moments {
    n: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Moments {
    fn new(d: usize) -> Self {
        Moments { n: 0, mean: vec![0.0; d], m2: vec![0.0; d * d] }
    }

    fn push(&mut self, x: &[f64]) {
        self.n += 1;
        let d = x.len();
        let delta: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        for (m, dl) in self.mean.iter_mut().zip(&delta) {
            *m += dl / self.n as f64;
        }
        for (row, di) in self.m2.chunks_exact_mut(d).zip(&delta) {
            for ((v, xj), mj) in row.iter_mut().zip(x).zip(&self.mean) {
                *v += di * (xj - mj);
            }
        }
    }

    fn covariance(&self) -> Vec<f64> {
        self.m2.iter().map(|v| v / (self.n as f64 - 1.0)).collect()
    }
}

struct Chain<'a> {
    model: &'a LinearGaussianModel,
    layout: &'a Layout,
    settings: &'a McmcSettings,
    rng: ChaCha8Rng,
    state: State,
    mu: Vec<f64>,
    s: Vec<f64>,
    // location block workspace
    q: Vec<f64>,
    b: Vec<f64>,
    z: Vec<f64>,
    // scale block proposal
    prop_chol: Vec<f64>,
    log_step: f64,
    tau_log_step: f64,
}

impl<'a> Chain<'a> {
    fn new(
        model: &'a LinearGaussianModel,
        layout: &'a Layout,
        settings: &'a McmcSettings,
        mut rng: ChaCha8Rng,
    ) -> Self {
        let pooled = {
            let sse: f64 = model.cells.iter().map(|c| c.sse).sum();
            let dof: usize = model.cells.iter().map(|c| c.n - 1).sum();
            if dof > 0 && sse > 0.0 {
                (sse / dof as f64).sqrt().ln()
            } else {
                0.0
            }
        };
        let scale: Vec<f64> = model
            .scale
            .iter()
            .enumerate()
            .map(|(k, c)| match c.term {
                Term::Fixed(v) => v,
                Term::Free(_) => {
                    let intercept = model.cells.iter().all(|cell| cell.scale[k] == 1.0);
                    let jitter: f64 = StandardNormal.sample(&mut rng);
                    0.5 * jitter + if intercept { pooled } else { 0.0 }
                }
            })
            .collect();
        let loc = model
            .location
            .iter()
            .map(|c| match &c.term {
                Term::Fixed(v) => *v,
                Term::Free(d) => normal_proxy(d).map_or(0.0, |(m, _)| m),
            })
            .collect();
        let tau = match model.random.as_ref().map(|r| &r.tau) {
            Some(Term::Fixed(t)) => *t,
            Some(Term::Free(_)) => {
                let jitter: f64 = StandardNormal.sample(&mut rng);
                (0.5_f64.ln() + 0.5 * jitter).exp()
            }
            None => 0.0,
        };
        let state = State { loc, scale, nu: vec![0.0; layout.levels], tau };
        let d = layout.loc_dim();
        let ds = layout.free_scale.len();
        let mut prop_chol = vec![0.0; ds * ds];
        for i in 0..ds {
            prop_chol[i * ds + i] = INITIAL_STEP;
        }
        let mut chain = Chain {
            model,
            layout,
            settings,
            rng,
            state,
            mu: vec![0.0; model.cells.len()],
            s: vec![0.0; model.cells.len()],
            q: vec![0.0; d * d],
            b: vec![0.0; d],
            z: vec![0.0; d],
            prop_chol,
            log_step: 0.0,
            tau_log_step: 0.0,
        };
        chain.refresh_scale();
        chain.refresh_mean();
        chain
    }

    fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    fn refresh_mean(&mut self) {
        for (m, c) in self.mu.iter_mut().zip(&self.model.cells) {
            *m = self.model.cell_mean(c, &self.state);
        }
    }

    fn refresh_scale(&mut self) {
        for (s, c) in self.s.iter_mut().zip(&self.model.cells) {
            *s = dot(&c.scale, &self.state.scale);
        }
    }

    fn run(mut self) -> Result<ChainOutput> {
        let (w, n) = (self.settings.warmup, self.settings.draws);
        let ds = self.layout.free_scale.len();
        let windows = [w * 15 / 100, w * 40 / 100, w * 90 / 100];
        let mut moments = Moments::new(ds);
        let mut window_start = 0;
        let (mut acc_loc, mut acc_scale, mut acc_tau) = (0.0, 0.0, 0.0);
        let mut draws = Vec::with_capacity(n);
        let steps = self.settings.inner_steps;

        for it in 0..w + n {
            let adapting = it < w;
            let a = self.location_step()?;
            let mut a_scale = 0.0;
            let mut a_tau = 0.0;
            for _ in 0..steps {
                let rate = 1.0 / ((it - window_start + 1) as f64).powf(0.6);
                if ds > 0 {
                    let acc = self.scale_step();
                    a_scale += acc;
                    if adapting {
                        self.log_step += rate * (acc - SCALE_TARGET);
                    }
                }
                if self.layout.tau_free {
                    let acc = self.tau_step();
                    a_tau += acc;
                    if adapting {
                        self.tau_log_step += rate * (acc - TAU_TARGET);
                    }
                }
            }
            if adapting && ds > 0 {
                let free: Vec<f64> =
                    self.layout.free_scale.iter().map(|&k| self.state.scale[k]).collect();
                moments.push(&free);
                if windows.contains(&(it + 1)) {
                    if moments.n > 10 * ds {
                        self.set_proposal(&moments.covariance());
                    }
                    moments = Moments::new(ds);
                    window_start = it + 1;
                }
            }
            if !adapting {
                acc_loc += a;
                acc_scale += a_scale / steps as f64;
                acc_tau += a_tau / steps as f64;
                draws.push(self.model.flatten(&self.state));
            }
        }
        let n = n as f64;
        Ok(ChainOutput {
            draws,
            acc_loc: acc_loc / n,
            acc_scale: acc_scale / n,
            acc_tau: acc_tau / n,
        })
    }

    fn set_proposal(&mut self, cov: &[f64]) {
        let d = self.layout.free_scale.len();
        let mut l = cov.to_vec();
        let ridge = 1e-10 * (0..d).map(|i| cov[i * d + i]).fold(0.0, f64::max).max(1e-12);
        for i in 0..d {
            l[i * d + i] += ridge;
        }
        if cholesky_in_place(&mut l, d) {
            self.prop_chol = l;
            self.log_step = (2.38 / (d as f64).sqrt()).ln();
        }
    }

    /// Draws location coefficients and random effects jointly; returns the
    /// acceptance indicator of the prior correction (1 when exact).
    fn location_step(&mut self) -> Result<f64> {
        let lay = self.layout;
        let d = lay.loc_dim();
        if d == 0 {
            return Ok(1.0);
        }
        let p = lay.free_loc.len();
        self.q.iter_mut().for_each(|v| *v = 0.0);
        self.b.iter_mut().for_each(|v| *v = 0.0);
        for (ci, cell) in self.model.cells.iter().enumerate() {
            let w = cell.n as f64 * (-2.0 * self.s[ci]).exp();
            let r = cell.mean - lay.offsets[ci];
            for (zi, &k) in lay.free_loc.iter().enumerate() {
                self.z[zi] = cell.loc[k];
            }
            let mut nz: Vec<usize> = (0..p).filter(|&i| self.z[i] != 0.0).collect();
            if lay.random_active {
                for v in &mut self.z[p..] {
                    *v = 0.0;
                }
                if let Some(l) = cell.level {
                    self.z[p + l] = 1.0;
                    nz.push(p + l);
                }
            }
            for &i in &nz {
                self.b[i] += w * r * self.z[i];
                for &j in &nz {
                    self.q[i * d + j] += w * self.z[i] * self.z[j];
                }
            }
        }
        for (zi, prior) in lay.loc_prior_normal.iter().enumerate() {
            if let Some((m, sd)) = prior {
                let prec = 1.0 / (sd * sd);
                self.q[zi * d + zi] += prec;
                self.b[zi] += prec * m;
            }
        }
        if lay.random_active {
            let prec = 1.0 / (self.state.tau * self.state.tau);
            for l in 0..lay.levels {
                self.q[(p + l) * d + p + l] += prec;
            }
        }
        if !cholesky_in_place(&mut self.q, d) {
            return Err(Error::Numerical(
                "improper posterior: location coefficients are not identified by the data and priors"
                    .into(),
            ));
        }
        // x = L^-T (L^-1 b + e)
        forward_substitute(&self.q, d, &mut self.b);
        for i in 0..d {
            self.b[i] += self.normal();
        }
        back_substitute_transpose(&self.q, d, &mut self.b);

        let mut accepted = 1.0;
        if lay.loc_mh {
            let mut log_ratio = 0.0;
            for (zi, &k) in lay.free_loc.iter().enumerate() {
                if let Term::Free(prior) = &self.model.location[k].term {
                    if matches!(prior, Distribution::Flat | Distribution::Normal { .. }) {
                        continue;
                    }
                    let proxy = |x: f64| {
                        lay.loc_prior_normal[zi]
                            .map_or(0.0, |(m, sd)| -0.5 * ((x - m) / sd).powi(2))
                    };
                    let (new, old) = (self.b[zi], self.state.loc[k]);
                    log_ratio +=
                        prior.ln_prior(new) - proxy(new) - prior.ln_prior(old) + proxy(old);
                }
            }
            let u: f64 = self.rng.random();
            if !(u.ln() < log_ratio) {
                accepted = 0.0;
            }
        }
        if accepted == 1.0 {
            for (zi, &k) in lay.free_loc.iter().enumerate() {
                self.state.loc[k] = self.b[zi];
            }
        }
        // random effects are refreshed regardless: their conditional is exact given
        // the proposal, so a rejected move keeps the old coefficients and redraws nu
        if lay.random_active {
            if accepted == 1.0 {
                self.state.nu.copy_from_slice(&self.b[p..]);
            } else {
                self.redraw_effects();
            }
        }
        self.refresh_mean();
        Ok(accepted)
    }

    /// Exact draw of the random effects given all other parameters.
    fn redraw_effects(&mut self) {
        let lay = self.layout;
        let mut prec = vec![1.0 / (self.state.tau * self.state.tau); lay.levels];
        let mut lin = vec![0.0; lay.levels];
        for (ci, cell) in self.model.cells.iter().enumerate() {
            if let Some(l) = cell.level {
                let w = cell.n as f64 * (-2.0 * self.s[ci]).exp();
                let fixed = dot(&cell.loc, &self.state.loc);
                prec[l] += w;
                lin[l] += w * (cell.mean - fixed);
            }
        }
        for l in 0..lay.levels {
            let e = self.normal();
            self.state.nu[l] = lin[l] / prec[l] + e / prec[l].sqrt();
        }
    }

    fn scale_log_target(&self, scale: &[f64]) -> f64 {
        let mut lp = 0.0;
        for (ci, cell) in self.model.cells.iter().enumerate() {
            lp += cell.log_lik(self.mu[ci], dot(&cell.scale, scale));
        }
        for &k in &self.layout.free_scale {
            if let Term::Free(d) = &self.model.scale[k].term {
                lp += d.ln_prior(scale[k]);
            }
        }
        if lp.is_nan() {
            f64::NEG_INFINITY
        } else {
            lp
        }
    }

    fn scale_step(&mut self) -> f64 {
        let ds = self.layout.free_scale.len();
        let e: Vec<f64> = (0..ds).map(|_| self.normal()).collect();
        let step = self.log_step.exp();
        let mut proposal = self.state.scale.clone();
        for i in 0..ds {
            let shift: f64 = (0..=i).map(|j| self.prop_chol[i * ds + j] * e[j]).sum();
            proposal[self.layout.free_scale[i]] += step * shift;
        }
        let log_ratio = self.scale_log_target(&proposal) - self.scale_log_target(&self.state.scale);
        let acc = log_ratio.min(0.0).exp();
        let u: f64 = self.rng.random();
        if u < acc {
            self.state.scale = proposal;
            self.refresh_scale();
        }
        if acc.is_nan() {
            0.0
        } else {
            acc
        }
    }

    fn tau_log_target(&self, log_tau: f64) -> f64 {
        let tau = log_tau.exp();
        let prior = match self.model.random.as_ref().map(|r| &r.tau) {
            Some(Term::Free(d)) => d.ln_prior(tau),
            _ => 0.0,
        };
        let lp = random_effects_ln_density(&self.state.nu, tau) + prior + log_tau;
        if lp.is_nan() {
            f64::NEG_INFINITY
        } else {
            lp
        }
    }

    fn tau_step(&mut self) -> f64 {
        let cur = self.state.tau.ln();
        let prop = cur + INITIAL_STEP * 5.0 * self.tau_log_step.exp() * self.normal();
        let log_ratio = self.tau_log_target(prop) - self.tau_log_target(cur);
        let acc = log_ratio.min(0.0).exp();
        let u: f64 = self.rng.random();
        if u < acc {
            self.state.tau = prop.exp();
        }
        if acc.is_nan() {
            0.0
        } else {
            acc
        }
    }
}

/// Lower Cholesky factor of a row-major symmetric matrix, written over its
/// lower triangle. Returns false unless the matrix is positive definite.
fn cholesky_in_place(a: &mut [f64], d: usize) -> bool {
    for j in 0..d {
        let mut diag = a[j * d + j];
        for k in 0..j {
            diag -= a[j * d + k] * a[j * d + k];
        }
        if !(diag > 0.0) || !diag.is_finite() {
            return false;
        }
        let l = diag.sqrt();
        a[j * d + j] = l;
        for i in j + 1..d {
            let mut v = a[i * d + j];
            for k in 0..j {
                v -= a[i * d + k] * a[j * d + k];
            }
            a[i * d + j] = v / l;
        }
        for i in 0..j {
            a[i * d + j] = 0.0;
        }
    }
    true
}

fn forward_substitute(l: &[f64], d: usize, x: &mut [f64]) {
    for i in 0..d {
        let mut v = x[i];
        for k in 0..i {
            v -= l[i * d + k] * x[k];
        }
        x[i] = v / l[i * d + i];
    }
}

fn back_substitute_transpose(l: &[f64], d: usize, x: &mut [f64]) {
    for i in (0..d).rev() {
        let mut v = x[i];
        for k in i + 1..d {
            v -= l[k * d + i] * x[k];
        }
        x[i] = v / l[i * d + i];
    }
}
