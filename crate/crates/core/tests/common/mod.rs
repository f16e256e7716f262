//! Closed-form posteriors used as oracles by several test targets.
#![allow(dead_code)]

use std::path::PathBuf;

use mapdesign::design::{
    fit_bayes_two_group, savage_dickey_bf10, BfSettings, NewExperimentPriors, DELTA_NAME,
    THETA_NAME,
};
use mapdesign::mcmc::{
    sample, Cell, Coefficient, LinearGaussianModel, McmcSettings, RandomIntercept, Term,
};
use mapdesign::stats::{Distribution, Purpose, RngStream};
use mapdesign::TwoGroupData;
use rand::Rng;
use rand_distr::StandardNormal;

pub fn data_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

pub fn settings(seed: u64) -> McmcSettings {
    McmcSettings { seed, ..McmcSettings::default() }
}

pub fn normal_sample(n: usize, mean: f64, sd: f64, rng: &mut impl Rng) -> Vec<f64> {
    (0..n).map(|_| mean + sd * rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Posterior of `(theta_C, delta)` with normal priors and known unit residual sd.
pub fn two_group_posterior(
    data: &TwoGroupData,
    theta: (f64, f64),
    delta_sd: f64,
) -> ([f64; 2], [[f64; 2]; 2]) {
    let (n_c, n_e) = (data.n_c() as f64, data.n_e() as f64);
    let (s_c, s_e): (f64, f64) = (data.y_c.iter().sum(), data.y_e.iter().sum());
    // precision = prior precision + X'X with rows (1, 0) and (1, 1)
    let p = [[1.0 / theta.1.powi(2) + n_c + n_e, n_e], [n_e, 1.0 / delta_sd.powi(2) + n_e]];
    let b = [theta.0 / theta.1.powi(2) + s_c + s_e, s_e];
    let det = p[0][0] * p[1][1] - p[0][1] * p[1][0];
    let cov = [[p[1][1] / det, -p[0][1] / det], [-p[1][0] / det, p[0][0] / det]];
    let mean = [cov[0][0] * b[0] + cov[0][1] * b[1], cov[1][0] * b[0] + cov[1][1] * b[1]];
    (mean, cov)
}

/// Residual sd pinned at 1 through near-degenerate priors on the log sds.
pub fn pinned_priors(theta: (f64, f64), delta_sd: f64) -> NewExperimentPriors {
    NewExperimentPriors {
        theta_c: Distribution::Normal { mean: theta.0, sd: theta.1 },
        delta: Distribution::Normal { mean: 0.0, sd: delta_sd },
        psi: Distribution::Normal { mean: 0.0, sd: 1e-4 },
        lambda: Distribution::Normal { mean: 0.0, sd: 1e-4 },
    }
}

pub struct ConjugateCheck {
    pub mean_error: [f64; 2],
    pub sd_ratio: [f64; 2],
    pub bf_sampled: f64,
    pub bf_exact: f64,
}

/// Two-group sampler against its closed-form posterior, plus the
/// Savage-Dickey ratio from draws against the exact density ratio.
pub fn two_group_conjugate(seed: u64, draws: usize) -> ConjugateCheck {
    let mut rng = RngStream::new(seed, 0, 0, Purpose::Simulate).rng();
    let data = TwoGroupData::new(
        normal_sample(8, 0.3, 1.0, &mut rng),
        normal_sample(8, 1.0, 1.0, &mut rng),
    )
    .unwrap();
    let (theta, delta_sd) = ((0.1, 0.7), 1.0);
    let fit = fit_bayes_two_group(
        &data,
        &pinned_priors(theta, delta_sd),
        &McmcSettings { draws, ..settings(seed) },
        0,
        0,
    )
    .unwrap();
    let (mean, cov) = two_group_posterior(&data, theta, delta_sd);
    let mut mean_error = [0.0; 2];
    let mut sd_ratio = [0.0; 2];
    for (k, name) in [THETA_NAME, DELTA_NAME].into_iter().enumerate() {
        let d = fit.draws.get(name).unwrap();
        mean_error[k] = (d.mean() - mean[k]) / cov[k][k].sqrt();
        sd_ratio[k] = d.sd() / cov[k][k].sqrt();
    }
    let prior = Distribution::Normal { mean: 0.0, sd: delta_sd };
    let post = Distribution::Normal { mean: mean[1], sd: cov[1][1].sqrt() };
    let bf_exact = prior.density(0.0).unwrap() / post.density(0.0).unwrap();
    let mut boot = RngStream::new(seed, 0, 0, Purpose::Bootstrap).rng();
    let bf = savage_dickey_bf10(
        &fit.draws.get(DELTA_NAME).unwrap(),
        &prior,
        &BfSettings { bootstrap: 0, ..BfSettings::default() },
        &mut boot,
    )
    .unwrap();
    ConjugateCheck { mean_error, sd_ratio, bf_sampled: bf.raw, bf_exact }
}

/// Cells `(n, mean, sse)` of a normal-normal hierarchy with known `sigma`
/// and `tau`, and a flat prior on the grand mean.
pub fn nnhm_model(cells: &[(usize, f64, f64)], sigma: f64, tau: f64) -> LinearGaussianModel {
    LinearGaussianModel {
        location: vec![Coefficient::free("mu", Distribution::Flat)],
        scale: vec![Coefficient::fixed("log_sigma", sigma.ln())],
        random: Some(RandomIntercept {
            tau_name: "tau".into(),
            effect_prefix: "nu".into(),
            levels: (0..cells.len()).map(|j| format!("s{j}")).collect(),
            tau: Term::Fixed(tau),
        }),
        cells: cells
            .iter()
            .enumerate()
            .map(|(j, &(n, mean, sse))| Cell {
                n,
                mean,
                sse,
                loc: vec![1.0],
                scale: vec![1.0],
                level: Some(j),
            })
            .collect(),
    }
}

/// Exact posterior mean and sd of `mu`, and posterior means of `mu + nu_j`.
pub fn nnhm_posterior(cells: &[(usize, f64, f64)], sigma: f64, tau: f64) -> (f64, f64, Vec<f64>) {
    let w: Vec<f64> =
        cells.iter().map(|&(n, _, _)| 1.0 / (tau * tau + sigma * sigma / n as f64)).collect();
    let total: f64 = w.iter().sum();
    let mu = cells.iter().zip(&w).map(|(c, w)| w * c.1).sum::<f64>() / total;
    let theta = cells
        .iter()
        .map(|&(n, ybar, _)| {
            let v = sigma * sigma / n as f64;
            (tau * tau * ybar + v * mu) / (tau * tau + v)
        })
        .collect();
    (mu, total.recip().sqrt(), theta)
}

pub struct NnhmCheck {
    pub mu_error: f64,
    pub mu_sd_ratio: f64,
    /// Largest |sampled - exact| over strain means, in posterior sd of mu.
    pub theta_error: f64,
}

pub fn nnhm_conjugate(seed: u64) -> NnhmCheck {
    let cells = [(4, 1.2, 2.0), (9, 0.4, 5.5), (2, 2.5, 0.3), (15, 0.9, 12.0), (6, -0.2, 3.1)];
    let (sigma, tau) = (0.8, 0.5);
    let fit = sample(&nnhm_model(&cells, sigma, tau), &settings(seed)).unwrap();
    let (mu, mu_sd, theta) = nnhm_posterior(&cells, sigma, tau);
    let mu_draws = fit.draws.get("mu").unwrap();
    let theta_error = (0..cells.len())
        .map(|j| {
            let t = fit.draws.derive(&["mu", &format!("nu[s{j}]")], |v| v[0] + v[1]).unwrap();
            (t.mean() - theta[j]).abs() / mu_sd
        })
        .fold(0.0, f64::max);
    NnhmCheck {
        mu_error: (mu_draws.mean() - mu) / mu_sd,
        mu_sd_ratio: mu_draws.sd() / mu_sd,
        theta_error,
    }
}

/// Every file of a report directory with its bytes, sorted by name.
pub fn bundle_bytes(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

/// Individual-level rows for the sufficiency check.
pub const INDIVIDUAL: &str = "\
experiment,strain,op,y
A,s1,None,1.2
A,s1,None,0.8
A,s1,None,1.5
A,s2,None,2.1
A,s2,None,1.7
B,s3,Ovx,0.4
B,s3,Ovx,-0.3
B,s3,Ovx,0.1
B,s3,Ovx,0.9
";

/// Collapses individual rows to `(n, mean, sd)` summary rows.
pub fn summarize(csv: &str) -> String {
    let mut groups: Vec<(String, Vec<f64>)> = vec![];
    for line in csv.lines().skip(1) {
        let (key, y) = line.rsplit_once(',').unwrap();
        let y: f64 = y.parse().unwrap();
        match groups.iter_mut().find(|(k, _)| k == key) {
            Some((_, v)) => v.push(y),
            None => groups.push((key.to_string(), vec![y])),
        }
    }
    let mut out = String::from("experiment,strain,op,n,mean,sd\n");
    for (key, v) in groups {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        let sd = (v.iter().map(|y| (y - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        out.push_str(&format!("{key},{},{m:?},{sd:?}\n", v.len()));
    }
    out
}
