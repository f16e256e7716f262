use serde::{Deserialize, Serialize};

pub const RHAT_LIMIT: f64 = 1.01;
pub const ESS_LIMIT: f64 = 400.0;
pub const REPORTED_LAGS: [usize; 3] = [1, 5, 10];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterDiagnostics {
    pub name: String,
    pub rhat: f64,
    pub ess: f64,
    /// `(lag, autocorrelation)` averaged over chains.
    pub autocorrelation: Vec<(usize, f64)>,
    pub flagged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvergenceStatus {
    Converged,
    NotConverged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub parameters: Vec<ParameterDiagnostics>,
    /// Mean post-warmup acceptance rate per Metropolis block.
    pub acceptance: Vec<(String, f64)>,
    pub status: ConvergenceStatus,
}

impl ConvergenceReport {
    pub fn is_converged(&self) -> bool {
        self.status == ConvergenceStatus::Converged
    }

    pub fn flagged(&self) -> impl Iterator<Item = &ParameterDiagnostics> {
        self.parameters.iter().filter(|p| p.flagged)
    }

    pub fn max_rhat(&self) -> f64 {
        self.parameters.iter().map(|p| p.rhat).fold(1.0, f64::max)
    }

    pub fn min_ess(&self) -> f64 {
        self.parameters.iter().map(|p| p.ess).fold(f64::INFINITY, f64::min)
    }
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v)
}

fn is_constant(chains: &[&[f64]]) -> bool {
    let first = chains[0][0];
    chains.iter().all(|c| c.iter().all(|&v| v == first))
}

/// Split potential scale reduction factor: each chain is halved and the
/// between/within variance ratio computed over the halves.
pub fn split_rhat(chains: &[&[f64]]) -> f64 {
    if is_constant(chains) {
        return 1.0;
    }
    let half = chains.iter().map(|c| c.len()).min().unwrap_or(0) / 2;
    if half < 2 {
        return f64::NAN;
    }
    let pieces: Vec<&[f64]> =
        chains.iter().flat_map(|c| [&c[..half], &c[half..2 * half]]).collect();
    let stats: Vec<(f64, f64)> = pieces.iter().map(|p| mean_var(p)).collect();
    let m = stats.len() as f64;
    let n = half as f64;
    let grand = stats.iter().map(|s| s.0).sum::<f64>() / m;
    let b = n / (m - 1.0) * stats.iter().map(|s| (s.0 - grand).powi(2)).sum::<f64>();
    let w = stats.iter().map(|s| s.1).sum::<f64>() / m;
    if w <= 0.0 {
        return f64::INFINITY;
    }
    let var_plus = (n - 1.0) / n * w + b / n;
    (var_plus / w).sqrt()
}

fn autocovariance(x: &[f64], mean: f64, lag: usize) -> f64 {
    let n = x.len();
    (0..n - lag).map(|i| (x[i] - mean) * (x[i + lag] - mean)).sum::<f64>() / n as f64
}

/// Mean over chains of the lag-`k` autocorrelation.
pub fn autocorrelation(chains: &[&[f64]], lag: usize) -> f64 {
    let vals: Vec<f64> = chains
        .iter()
        .filter(|c| c.len() > lag)
        .map(|c| {
            let m = c.iter().sum::<f64>() / c.len() as f64;
            let v0 = autocovariance(c, m, 0);
            if v0 > 0.0 {
                autocovariance(c, m, lag) / v0
            } else {
                0.0
            }
        })
        .collect();
    if vals.is_empty() {
        f64::NAN
    } else {
        vals.iter().sum::<f64>() / vals.len() as f64
    }
}

/// Multi-chain effective sample size with Geyer's initial monotone sequence
/// estimator, capped at the total number of draws.
pub fn effective_sample_size(chains: &[&[f64]]) -> f64 {
    let m = chains.len();
    let n = chains.iter().map(|c| c.len()).min().unwrap_or(0);
    let total = (m * n) as f64;
    if n < 4 {
        return f64::NAN;
    }
    if is_constant(chains) {
        return total;
    }
    let chains: Vec<&[f64]> = chains.iter().map(|c| &c[..n]).collect();
    let stats: Vec<(f64, f64)> = chains.iter().map(|c| mean_var(c)).collect();
    let nf = n as f64;
    let w = stats.iter().map(|s| s.1).sum::<f64>() / m as f64;
    let var_plus = if m > 1 {
        let grand = stats.iter().map(|s| s.0).sum::<f64>() / m as f64;
        let b = nf / (m as f64 - 1.0) * stats.iter().map(|s| (s.0 - grand).powi(2)).sum::<f64>();
        (nf - 1.0) / nf * w + b / nf
    } else {
        (nf - 1.0) / nf * w
    };
    if var_plus <= 0.0 {
        return total;
    }
    let rho = |lag: usize| -> f64 {
        let acov = chains.iter().zip(&stats).map(|(c, s)| autocovariance(c, s.0, lag)).sum::<f64>()
            / m as f64;
        // acov at lag 0 uses divisor n; rescale the within variance to match
        1.0 - (w * (nf - 1.0) / nf - acov) / var_plus
    };

    let mut sum_pairs = 0.0;
    let mut prev_pair = f64::INFINITY;
    let mut t = 0;
    while t + 1 < n {
        let mut pair = rho(t) + rho(t + 1);
        if pair <= 0.0 {
            break;
        }
        if pair > prev_pair {
            pair = prev_pair;
        }
        prev_pair = pair;
        sum_pairs += pair;
        t += 2;
    }
    let tau = (-1.0 + 2.0 * sum_pairs).max(f64::MIN_POSITIVE);
    (total / tau).min(total)
}

pub fn diagnose(name: &str, chains: &[&[f64]]) -> ParameterDiagnostics {
    let rhat = split_rhat(chains);
    let ess = effective_sample_size(chains);
    let autocorrelation = REPORTED_LAGS.iter().map(|&k| (k, autocorrelation(chains, k))).collect();
    let flagged = !is_constant(chains) && (!(rhat < RHAT_LIMIT) || !(ess >= ESS_LIMIT));
    ParameterDiagnostics { name: name.to_string(), rhat, ess, autocorrelation, flagged }
}
