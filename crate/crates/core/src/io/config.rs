use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::checks::{DEFAULT_BINS, DEFAULT_CLIP};
use crate::design::{
    design_grid, BfSettings, DecisionRules, DesignSettings, DesignSpec, Generation,
    DEFAULT_DELTA_SD,
};
use crate::error::{Error, Result};
use crate::map::EmSettings;
use crate::mcmc::{McmcSettings, DEFAULT_INNER_STEPS};
use crate::meta::{MetaModelSpec, Op, PriorSet};
use crate::stats::Distribution;

/// Environment variable naming the default output directory.
pub const OUTPUT_ENV: &str = "MAPDESIGN_OUT";

/// Everything a run needs. Unknown keys are rejected; every section but
/// `data` has defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    pub data: DataConfig,
    #[serde(default)]
    pub meta: MetaConfig,
    #[serde(default)]
    pub mcmc: McmcConfig,
    #[serde(default)]
    pub map: MapConfig,
    #[serde(default)]
    pub checks: ChecksConfig,
    /// Absent when no design analysis is wanted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design: Option<DesignConfig>,
    #[serde(default)]
    pub power: PowerConfig,
}

fn default_seed() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Relative paths are resolved against the config file's directory.
    pub path: PathBuf,
    /// Log-transform individual values on ingestion.
    #[serde(default)]
    pub log_transform: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorChoice {
    #[default]
    Manual,
    DefaultWide,
}

/// Replacement priors for individual meta-analysis parameters.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Distribution<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_ovx: Option<Distribution<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_sham: Option<Distribution<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi: Option<Distribution<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_ovx: Option<Distribution<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_sham: Option<Distribution<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<Distribution<f64>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetaConfig {
    #[serde(default)]
    pub priors: PriorChoice,
    #[serde(default)]
    pub overrides: PriorOverrides,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_fixed: Option<f64>,
}

impl MetaConfig {
    pub fn prior_set(&self) -> PriorSet {
        let mut p = match self.priors {
            PriorChoice::Manual => PriorSet::manual(),
            PriorChoice::DefaultWide => PriorSet::default_wide(),
        };
        let o = &self.overrides;
        let slots = [
            (&mut p.alpha, &o.alpha),
            (&mut p.beta_ovx, &o.beta_ovx),
            (&mut p.beta_sham, &o.beta_sham),
            (&mut p.psi, &o.psi),
            (&mut p.lambda_ovx, &o.lambda_ovx),
            (&mut p.lambda_sham, &o.lambda_sham),
            (&mut p.tau, &o.tau),
        ];
        for (slot, over) in slots {
            if let Some(d) = over {
                *slot = d.clone();
            }
        }
        p
    }

    pub fn model_spec(&self) -> MetaModelSpec {
        MetaModelSpec { priors: self.prior_set(), tau_fixed: self.tau_fixed }
    }
}

/// Sampler settings without the seed, which comes from the run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McmcConfig {
    pub chains: usize,
    pub warmup: usize,
    pub draws: usize,
    pub inner_steps: usize,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig { chains: 4, warmup: 1000, draws: 1000, inner_steps: DEFAULT_INNER_STEPS }
    }
}

impl McmcConfig {
    pub fn settings(&self, seed: u64) -> McmcSettings {
        McmcSettings {
            chains: self.chains,
            warmup: self.warmup,
            draws: self.draws,
            seed,
            inner_steps: self.inner_steps,
        }
    }
}

/// Parametric family used as the control-mean prior of a new experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaFamily {
    Normal,
    StudentT,
    /// EM normal mixture with AIC-selected component count.
    #[default]
    Mixture,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MapConfig {
    /// Historical group the new control group is exchangeable with.
    pub source_op: Op,
    pub theta_family: ThetaFamily,
    pub max_components: usize,
    pub em_max_iter: usize,
    pub em_tol: f64,
    pub em_restarts: usize,
}

impl Default for MapConfig {
    fn default() -> Self {
        let em = EmSettings::default();
        MapConfig {
            source_op: Op::Ovx,
            theta_family: ThetaFamily::Mixture,
            max_components: 3,
            em_max_iter: em.max_iter,
            em_tol: em.tol,
            em_restarts: em.restarts,
        }
    }
}

impl MapConfig {
    pub fn em_settings(&self, seed: u64) -> EmSettings {
        EmSettings {
            max_iter: self.em_max_iter,
            tol: self.em_tol,
            restarts: self.em_restarts,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChecksConfig {
    pub enabled: bool,
    /// Predictive replicate datasets per check.
    pub replicates: usize,
    /// Values per prior-predictive dataset; the historical sample size when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub size: Option<usize>,
    pub bins: usize,
    pub clip: f64,
}

impl Default for ChecksConfig {
    fn default() -> Self {
        ChecksConfig {
            enabled: true,
            replicates: 200,
            size: None,
            bins: DEFAULT_BINS,
            clip: DEFAULT_CLIP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignConfig {
    /// Group sizes as `[n_E, n_C]`.
    pub sizes: Vec<[usize; 2]>,
    pub deltas: Vec<f64>,
    pub ratios: Vec<f64>,
    #[serde(default = "default_theta_c")]
    pub theta_c: f64,
    #[serde(default)]
    pub log_sigma_c: f64,
    pub replicates: usize,
    #[serde(default = "default_delta_sd")]
    pub delta_prior_sd: f64,
    #[serde(default)]
    pub generation: Generation,
    #[serde(default)]
    pub rules: DecisionRules,
    #[serde(default)]
    pub bf: BfSettings,
    /// Sampler settings for replicate fits; the run's `mcmc` section when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mcmc: Option<McmcConfig>,
}

fn default_theta_c() -> f64 {
    0.1
}

fn default_delta_sd() -> f64 {
    DEFAULT_DELTA_SD
}

impl DesignConfig {
    /// Sizes (5,5), (10,5), (10,10), effects 0, 0.6, 1.3, 1.9 and sd ratios
    /// 1 and 1.5, with every other setting at its default.
    pub fn reference(replicates: usize) -> Self {
        DesignConfig {
            sizes: vec![[5, 5], [10, 5], [10, 10]],
            deltas: vec![0.0, 0.6, 1.3, 1.9],
            ratios: vec![1.0, 1.5],
            theta_c: default_theta_c(),
            log_sigma_c: 0.0,
            replicates,
            delta_prior_sd: DEFAULT_DELTA_SD,
            generation: Generation::default(),
            rules: DecisionRules::default(),
            bf: BfSettings::default(),
            mcmc: None,
        }
    }

    pub fn designs(&self, seed: u64) -> Vec<DesignSpec> {
        let sizes: Vec<(usize, usize)> = self.sizes.iter().map(|s| (s[0], s[1])).collect();
        design_grid(
            &sizes,
            &self.deltas,
            &self.ratios,
            self.theta_c,
            self.log_sigma_c,
            self.replicates,
            seed,
        )
    }

    pub fn settings(&self, fallback: &McmcConfig, seed: u64) -> DesignSettings {
        DesignSettings {
            mcmc: self.mcmc.unwrap_or(*fallback).settings(seed),
            rules: self.rules,
            bf: self.bf,
            generation: self.generation,
        }
    }
}

/// One classical sample-size setting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerRow {
    pub delta_rel: f64,
    pub sigma_c: f64,
    pub sigma_e: f64,
    /// n_E / n_C
    pub alloc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PowerConfig {
    pub alpha: f64,
    pub power: f64,
    pub rows: Vec<PowerRow>,
}

impl Default for PowerConfig {
    fn default() -> Self {
        PowerConfig { alpha: 0.05, power: 0.8, rows: PowerConfig::reference_rows() }
    }
}

impl PowerConfig {
    /// Effects 0.3, 0.6, 1.3, 1.9 crossed with sd ratios 1, 1.5 and
    /// allocations 1, 2, in that nesting order.
    pub fn reference_rows() -> Vec<PowerRow> {
        let mut rows = vec![];
        for delta_rel in [0.3, 0.6, 1.3, 1.9] {
            for sigma_e in [1.0, 1.5] {
                for alloc in [1.0, 2.0] {
                    rows.push(PowerRow { delta_rel, sigma_c: 1.0, sigma_e, alloc });
                }
            }
        }
        rows
    }
}

impl RunConfig {
    /// Minimal config for a data file, with every other section at its default.
    pub fn for_data(path: impl Into<PathBuf>) -> Self {
        RunConfig {
            seed: default_seed(),
            output_dir: None,
            workers: None,
            data: DataConfig { path: path.into(), log_transform: false },
            meta: MetaConfig::default(),
            mcmc: McmcConfig::default(),
            map: MapConfig::default(),
            checks: ChecksConfig::default(),
            design: None,
            power: PowerConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config file; a relative data path is taken
    /// relative to the file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        if cfg.data.path.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.data.path = dir.join(&cfg.data.path);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// SHA-256 of the canonical TOML serialization.
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.to_toml()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    /// Output directory: the configured one, else `$MAPDESIGN_OUT`, else `out`.
    pub fn resolved_output_dir(&self) -> PathBuf {
        self.output_dir
            .clone()
            .or_else(|| std::env::var_os(OUTPUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn mcmc_settings(&self) -> McmcSettings {
        self.mcmc.settings(self.seed)
    }

    pub fn validate(&self) -> Result<()> {
        let ctx = |e: Error| e.in_module("config");
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        self.mcmc_settings().validate().map_err(ctx)?;
        let spec = self.meta.model_spec();
        spec.priors.validate().map_err(ctx)?;
        if let Some(t) = spec.tau_fixed {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(Error::Config("tau_fixed must be >= 0".into()));
            }
        }
        if !(1..=crate::map::MAX_COMPONENTS).contains(&self.map.max_components)
            || self.map.em_restarts == 0
        {
            return Err(Error::Config("map: max_components in 1..=5 and em_restarts >= 1".into()));
        }
        if self.checks.enabled
            && (self.checks.replicates < crate::checks::MIN_REPLICATES
                || self.checks.bins == 0
                || !(self.checks.clip > 0.0)
                || self.checks.size == Some(0))
        {
            return Err(Error::Config(
                "checks: need >= 10 replicates, >= 1 bin, a positive clip and size".into(),
            ));
        }
        if let Some(d) = &self.design {
            if d.sizes.is_empty() || d.deltas.is_empty() || d.ratios.is_empty() {
                return Err(Error::Config(
                    "design: sizes, deltas and ratios must be non-empty".into(),
                ));
            }
            if !(d.delta_prior_sd > 0.0) {
                return Err(Error::Config("design: delta_prior_sd must be positive".into()));
            }
            for spec in d.designs(self.seed) {
                spec.validate().map_err(ctx)?;
            }
            d.settings(&self.mcmc, self.seed).validate().map_err(ctx)?;
        }
        for row in &self.power.rows {
            self.power.request(row).validate().map_err(|e| e.in_module("power"))?;
        }
        Ok(())
    }
}

impl PowerConfig {
    pub fn request(&self, row: &PowerRow) -> crate::freq::SampleSizeRequest<f64> {
        crate::freq::SampleSizeRequest {
            delta_rel: row.delta_rel,
            sigma_c: row.sigma_c,
            sigma_e: row.sigma_e,
            alloc_ratio: row.alloc,
            alpha: self.alpha,
            power: self.power,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
seed = 7

[data]
path = "historical_controls.csv"

[meta]
priors = "manual"

[meta.overrides]
alpha = { family = "normal", mean = 2.0, sd = 0.5 }

[mcmc]
chains = 2

[design]
sizes = [[10, 5]]
deltas = [0.0, 1.9]
ratios = [1.0]
replicates = 20
"#;

    #[test]
    fn parses_with_defaults_and_overrides() {
        let cfg = RunConfig::from_toml(SAMPLE).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.mcmc.chains, 2);
        assert_eq!(cfg.mcmc.draws, 1000);
        assert_eq!(cfg.meta.prior_set().alpha, Distribution::Normal { mean: 2.0, sd: 0.5 });
        assert_eq!(cfg.meta.prior_set().tau, PriorSet::manual().tau);
        let d = cfg.design.as_ref().unwrap();
        assert_eq!(d.designs(cfg.seed).len(), 2);
        assert_eq!(d.designs(cfg.seed)[0].n_e, 10);
        assert_eq!(cfg.power.rows.len(), 16);
    }

    #[test]
    fn serialization_round_trip_is_idempotent() {
        let cfg = RunConfig::from_toml(SAMPLE).unwrap();
        let once = cfg.to_toml().unwrap();
        let again = RunConfig::from_toml(&once).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.to_toml().unwrap(), once);
        assert_eq!(again.hash().unwrap(), cfg.hash().unwrap());
        assert_eq!(cfg.hash().unwrap().len(), 64);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        let extra = format!("{SAMPLE}\n[bogus]\nx = 1\n");
        assert!(matches!(RunConfig::from_toml(&extra), Err(Error::Config(_))));
        let typo = SAMPLE.replace("chains = 2", "chain = 2");
        assert!(RunConfig::from_toml(&typo).is_err());
        let bad = SAMPLE.replace("replicates = 20", "replicates = 0");
        assert!(RunConfig::from_toml(&bad).is_err());
        let bad = SAMPLE.replace("chains = 2", "chains = 0");
        assert!(RunConfig::from_toml(&bad).is_err());
    }

    #[test]
    fn fixture_config_loads() {
        let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/reference.toml");
        let cfg = RunConfig::load(path).unwrap();
        assert!(cfg.data.path.ends_with("data/historical_controls.csv"));
        assert_eq!(cfg.design.unwrap(), DesignConfig::reference(2000));
    }

    #[test]
    fn reference_power_rows_follow_the_table_order() {
        let rows = PowerConfig::reference_rows();
        assert_eq!(rows.len(), 16);
        assert_eq!((rows[3].delta_rel, rows[3].sigma_e, rows[3].alloc), (0.3, 1.5, 2.0));
        assert_eq!((rows[12].delta_rel, rows[12].sigma_e, rows[12].alloc), (1.9, 1.0, 1.0));
    }
}
