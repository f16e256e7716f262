//! Metropolis-within-Gibbs sampling for normal models with a log-linear
//! residual scale and an optional normal random intercept, plus convergence
//! diagnostics and a long-format draw store.

mod diagnostics;
mod draws;
mod model;
mod sampler;

pub use diagnostics::{
    autocorrelation, diagnose, effective_sample_size, split_rhat, ConvergenceReport,
    ConvergenceStatus, ParameterDiagnostics, ESS_LIMIT, RHAT_LIMIT,
};
pub use draws::PosteriorDraws;
pub use model::{
    random_effects_ln_density, Cell, Coefficient, LinearGaussianModel, RandomIntercept, State, Term,
};
pub use sampler::{sample, sample_stream, McmcFit, McmcSettings, DEFAULT_INNER_STEPS};
