use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{RunConfig, ThetaFamily};
use super::ingest::ingest_historical;
use crate::checks::{
    histogram_bands, stat_distribution, write_bands_csv, write_stats_csv, BandSummary, Stat,
};
use crate::design::{
    run_design_grid, write_design_metrics_csv, write_outcomes_csv, write_rule_metrics_csv,
    DesignResult, NewExperimentPriors,
};
use crate::error::{Error, Result};
use crate::freq::welch_sample_size;
use crate::map::{
    ess_moment, fit_mixture_em, fit_normal_ml, fit_t_ml, ParametricFit, PriorSpecFile,
};
use crate::mcmc::{McmcFit, PosteriorDraws};
use crate::meta::{
    population_summary, posterior_epred, posterior_predictive, posterior_sigma, prior_predictive,
    sample_posterior, shrinkage_table, EffectSummary, HistoricalDataset, PriorSet, ShrinkageRow,
    PRIOR_PREDICTIVE_STRAINS,
};
use crate::stats::{Distribution, DrawVector, Purpose, RngStream};

pub const POPULATION_SUMMARY: &str = "population_summary.csv";
pub const SHRINKAGE: &str = "shrinkage.csv";
pub const META_DRAWS: &str = "meta_draws.csv";
pub const META_DIAGNOSTICS: &str = "meta_diagnostics.csv";
pub const PARAMETRIC_FITS: &str = "parametric_fits.csv";
pub const PRIOR_SPEC: &str = "prior_spec.json";
pub const CHECK_BANDS: &str = "check_bands.csv";
pub const CHECK_STATS: &str = "check_stats.csv";
pub const DESIGN_METRICS: &str = "design_metrics.csv";
pub const RULE_METRICS: &str = "rule_metrics.csv";
pub const REPLICATE_OUTCOMES: &str = "replicate_outcomes.csv";
pub const SAMPLE_SIZES: &str = "sample_sizes.csv";
pub const MANIFEST: &str = "manifest.json";

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub name: String,
    pub sha256: String,
}

/// Writes files into one directory and records their digests.
#[derive(Debug)]
pub struct OutputDir {
    dir: PathBuf,
    files: Vec<FileDigest>,
}

impl OutputDir {
    pub fn create(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(OutputDir { dir, files: vec![] })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    pub fn files(&self) -> &[FileDigest] {
        &self.files
    }

    /// Renders into memory with `f`, then writes `name`.
    pub fn write(&mut self, name: &str, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        let path = self.dir.join(name);
        std::fs::write(&path, &buf).map_err(|e| Error::io(&path, e))?;
        self.files.retain(|d| d.name != name);
        self.files.push(FileDigest { name: name.to_string(), sha256: sha256_hex(&buf) });
        Ok(())
    }
}

fn write_rows<T: Serialize>(rows: &[T], buf: &mut Vec<u8>) -> Result<()> {
    let mut w = csv::Writer::from_writer(buf);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("table", e))
}

/// Meta-analysis of the historical data.
#[derive(Debug, Clone)]
pub struct MetaStage {
    pub data: HistoricalDataset,
    pub fit: McmcFit,
    pub summary: Vec<EffectSummary>,
    pub shrinkage: Vec<ShrinkageRow>,
}

impl MetaStage {
    pub fn flags(&self) -> Vec<String> {
        if self.fit.is_converged() {
            return vec![];
        }
        let names: Vec<&str> = self.fit.report.flagged().map(|p| p.name.as_str()).collect();
        vec![format!(
            "meta-fit: not converged (max R-hat {:.4}, min ESS {:.0}; flagged: {})",
            self.fit.report.max_rhat(),
            self.fit.report.min_ess(),
            names.join(", ")
        )]
    }

    pub fn write(&self, out: &mut OutputDir) -> Result<()> {
        out.write(POPULATION_SUMMARY, |b| write_rows(&self.summary, b))?;
        out.write(SHRINKAGE, |b| write_rows(&self.shrinkage, b))?;
        out.write(META_DRAWS, |b| self.fit.draws.write_csv(b))?;
        out.write(META_DIAGNOSTICS, |b| {
            let mut w = csv::Writer::from_writer(b);
            w.write_record(["parameter", "rhat", "ess", "ac1", "ac5", "ac10", "flagged"])?;
            for p in &self.fit.report.parameters {
                let mut row = vec![p.name.clone(), p.rhat.to_string(), p.ess.to_string()];
                row.extend(p.autocorrelation.iter().map(|(_, a)| a.to_string()));
                row.push(p.flagged.to_string());
                w.write_record(&row)?;
            }
            w.flush().map_err(|e| Error::io(META_DIAGNOSTICS, e))
        })
    }
}

pub fn meta_stage(cfg: &RunConfig) -> Result<MetaStage> {
    let data = ingest_historical(&cfg.data.path, cfg.data.log_transform)
        .map_err(|e| e.in_module("ingest"))?;
    let fit = sample_posterior(&cfg.meta.model_spec(), &data, &cfg.mcmc_settings())?;
    let summary = population_summary(&fit.draws).map_err(|e| e.in_module("meta-fit"))?;
    let shrinkage = shrinkage_table(&fit.draws, &data).map_err(|e| e.in_module("meta-fit"))?;
    Ok(MetaStage { data, fit, summary, shrinkage })
}

/// One row of the parametric-fit table; mixtures give one row per component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRow {
    pub quantity: String,
    pub family: String,
    pub component: usize,
    pub weight: f64,
    pub location: f64,
    pub scale: f64,
    pub df: Option<f64>,
    pub log_likelihood: f64,
    pub aic: f64,
}

fn fit_rows(quantity: &str, fit: &ParametricFit) -> Vec<FitRow> {
    let row = |component, weight, location, scale, df| FitRow {
        quantity: quantity.to_string(),
        family: fit.distribution.family_name().to_string(),
        component,
        weight,
        location,
        scale,
        df,
        log_likelihood: fit.log_likelihood,
        aic: fit.aic,
    };
    match &fit.distribution {
        Distribution::Normal { mean, sd } => vec![row(1, 1.0, *mean, *sd, None)],
        Distribution::StudentT { df, location, scale } => {
            vec![row(1, 1.0, *location, *scale, Some(*df))]
        }
        Distribution::NormalMixture { components } => components
            .iter()
            .enumerate()
            .map(|(i, c)| row(i + 1, c.weight, c.mean, c.sd, None))
            .collect(),
        _ => vec![],
    }
}

/// MAP prior for a new control group.
#[derive(Debug, Clone)]
pub struct MapStage {
    pub prior: PriorSpecFile,
    pub fits: Vec<FitRow>,
    pub theta_draws: DrawVector<f64>,
    pub sigma_draws: DrawVector<f64>,
}

impl MapStage {
    pub fn write(&self, out: &mut OutputDir) -> Result<()> {
        out.write(PARAMETRIC_FITS, |b| write_rows(&self.fits, b))?;
        out.write(PRIOR_SPEC, |b| {
            b.extend(serde_json::to_string_pretty(&self.prior)?.as_bytes());
            Ok(())
        })
    }
}

/// Fits parametric approximations to the population mean and residual sd of
/// the source group and derives the new-experiment prior and its ESS.
pub fn map_stage(cfg: &RunConfig, draws: &PosteriorDraws) -> Result<MapStage> {
    let ctx = |e: Error| e.in_module("map-prior");
    let op = cfg.map.source_op;
    let theta = posterior_epred(draws, op).map_err(ctx)?;
    let sigma = posterior_sigma(draws, op).map_err(ctx)?;
    let log_sigma = sigma.map(f64::ln).map_err(ctx)?;

    let normal = fit_normal_ml(&theta).map_err(ctx)?;
    let student = fit_t_ml(&theta).ok();
    let mixture = fit_mixture_em(&theta, cfg.map.max_components, &cfg.map.em_settings(cfg.seed))
        .map_err(ctx)?;
    let sigma_fit = fit_normal_ml(&sigma).map_err(ctx)?;
    let log_sigma_fit = fit_normal_ml(&log_sigma).map_err(ctx)?;

    let theta_fit = match cfg.map.theta_family {
        ThetaFamily::Normal => normal.clone(),
        ThetaFamily::StudentT => {
            student.clone().ok_or_else(|| Error::NoConvergence("map-prior: t fit failed".into()))?
        }
        ThetaFamily::Mixture => mixture.clone(),
    };
    let ess = ess_moment(&theta_fit, sigma.mean()).map_err(ctx)?;

    let mut fits = fit_rows("theta_c", &normal);
    if let Some(t) = &student {
        fits.extend(fit_rows("theta_c", t));
    }
    fits.extend(fit_rows("theta_c_em", &mixture));
    fits.extend(fit_rows("sigma_c", &sigma_fit));
    fits.extend(fit_rows("log_sigma_c", &log_sigma_fit));

    Ok(MapStage {
        prior: PriorSpecFile {
            theta_c: theta_fit,
            log_sigma_c: log_sigma_fit,
            sigma_c: sigma_fit,
            ess,
        },
        fits,
        theta_draws: theta,
        sigma_draws: sigma,
    })
}

/// Prior and posterior predictive summaries.
#[derive(Debug, Clone)]
pub struct CheckStage {
    pub bands: Vec<(String, BandSummary)>,
    pub stats: Vec<(String, Stat, DrawVector<f64>)>,
    pub clip: f64,
}

impl CheckStage {
    pub fn band(&self, source: &str) -> Option<&BandSummary> {
        self.bands.iter().find(|(s, _)| s == source).map(|(_, b)| b)
    }

    pub fn write(&self, out: &mut OutputDir) -> Result<()> {
        let bands: Vec<(&str, &BandSummary)> =
            self.bands.iter().map(|(s, b)| (s.as_str(), b)).collect();
        out.write(CHECK_BANDS, |b| write_bands_csv(&bands, b))?;
        let stats: Vec<(&str, Stat, &DrawVector<f64>)> =
            self.stats.iter().map(|(s, k, d)| (s.as_str(), *k, d)).collect();
        out.write(CHECK_STATS, |b| write_stats_csv(&stats, self.clip, b))
    }
}

pub const PRIOR_MANUAL: &str = "prior_manual";
pub const PRIOR_DEFAULT_WIDE: &str = "prior_default_wide";

/// Prior predictive checks under the manual and the wide default priors, and
/// posterior predictive checks for every operation group in the data.
pub fn check_stage(
    cfg: &RunConfig,
    data: &HistoricalDataset,
    draws: &PosteriorDraws,
) -> Result<CheckStage> {
    let ctx = |e: Error| e.in_module("check");
    let c = &cfg.checks;
    let size = c.size.unwrap_or_else(|| data.total_n());
    let mut sets = vec![];
    for (k, (name, priors)) in
        [(PRIOR_MANUAL, PriorSet::manual()), (PRIOR_DEFAULT_WIDE, PriorSet::default_wide())]
            .into_iter()
            .enumerate()
    {
        let stream = RngStream::new(cfg.seed, 0, k as u64, Purpose::PriorPredictive);
        let reps = prior_predictive(&priors, c.replicates, size, PRIOR_PREDICTIVE_STRAINS, stream)
            .map_err(ctx)?;
        sets.push((name.to_string(), reps));
    }
    for (k, op) in data.ops().into_iter().enumerate() {
        let stream = RngStream::new(cfg.seed, 0, k as u64, Purpose::PosteriorPredictive);
        let reps = posterior_predictive(draws, data, op, c.replicates, stream).map_err(ctx)?;
        sets.push((format!("posterior_{}", op.key()), reps));
    }
    let mut bands = vec![];
    let mut stats = vec![];
    for (name, reps) in sets {
        let reps = crate::checks::ReplicateSet::new(reps.replicates().to_vec(), c.clip)?;
        bands.push((name.clone(), histogram_bands(&reps, c.bins).map_err(ctx)?));
        for stat in [Stat::Mean, Stat::Sd] {
            stats.push((name.clone(), stat, stat_distribution(&reps, stat).map_err(ctx)?));
        }
    }
    Ok(CheckStage { bands, stats, clip: c.clip })
}

/// One row of the classical sample-size table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleSizeRow {
    pub setting: usize,
    pub delta_rel: f64,
    pub sigma_c: f64,
    pub sigma_e: f64,
    pub alloc: f64,
    pub n_c: usize,
    pub n_e: usize,
    pub n_c_exact: f64,
    pub achieved_power: f64,
}

pub fn power_stage(cfg: &RunConfig) -> Result<Vec<SampleSizeRow>> {
    cfg.power
        .rows
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let s = welch_sample_size(&cfg.power.request(row)).map_err(|e| e.in_module("power"))?;
            Ok(SampleSizeRow {
                setting: i + 1,
                delta_rel: row.delta_rel,
                sigma_c: row.sigma_c,
                sigma_e: row.sigma_e,
                alloc: row.alloc,
                n_c: s.n_c,
                n_e: s.n_e,
                n_c_exact: s.n_c_exact,
                achieved_power: s.achieved_power,
            })
        })
        .collect()
}

pub fn write_sample_sizes(rows: &[SampleSizeRow], out: &mut OutputDir) -> Result<()> {
    out.write(SAMPLE_SIZES, |b| write_rows(rows, b))
}

/// Runs the configured design grid under priors derived from `prior`.
pub fn design_stage(cfg: &RunConfig, prior: &PriorSpecFile) -> Result<Vec<DesignResult>> {
    let Some(d) = &cfg.design else { return Ok(vec![]) };
    let priors = NewExperimentPriors::from_prior_spec(prior, d.delta_prior_sd)
        .map_err(|e| e.in_module("design"))?;
    run_design_grid(&d.designs(cfg.seed), &priors, &d.settings(&cfg.mcmc, cfg.seed), cfg.workers)
        .map_err(|e| e.in_module("design"))
}

pub fn design_flags(results: &[DesignResult]) -> Vec<String> {
    results
        .iter()
        .filter(|r| r.metrics.flagged)
        .map(|r| {
            format!(
                "design {}: {} of {} replicates excluded for non-convergence",
                r.design_id, r.metrics.excluded, r.design.replicates
            )
        })
        .collect()
}

pub fn write_design_outputs(results: &[DesignResult], out: &mut OutputDir) -> Result<()> {
    let metrics: Vec<_> = results.iter().map(|r| r.metrics.clone()).collect();
    out.write(DESIGN_METRICS, |b| write_design_metrics_csv(&metrics, b))?;
    out.write(RULE_METRICS, |b| write_rule_metrics_csv(&metrics, b))?;
    out.write(REPLICATE_OUTCOMES, |b| write_outcomes_csv(results, b))
}

/// What is needed to regenerate a bundle: the run-relevant configuration,
/// the input digest and the digests of every emitted file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub config_hash: String,
    /// Config with the output directory and worker count removed; neither
    /// affects any result.
    pub config: RunConfig,
    pub data_sha256: String,
    pub files: Vec<FileDigest>,
    pub flags: Vec<String>,
}

impl Manifest {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Result-relevant part of a config.
pub fn canonical_config(cfg: &RunConfig) -> RunConfig {
    RunConfig { output_dir: None, workers: None, ..cfg.clone() }
}

pub fn write_manifest(
    cfg: &RunConfig,
    out: &mut OutputDir,
    flags: Vec<String>,
) -> Result<Manifest> {
    let data = std::fs::read(&cfg.data.path).map_err(|e| Error::io(&cfg.data.path, e))?;
    let config = canonical_config(cfg);
    let mut files = out.files().to_vec();
    files.sort_by(|a, b| a.name.cmp(&b.name));
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.seed,
        config_hash: config.hash()?,
        config,
        data_sha256: sha256_hex(&data),
        files,
        flags,
    };
    out.write(MANIFEST, |b| {
        b.extend(serde_json::to_string_pretty(&manifest)?.as_bytes());
        Ok(())
    })?;
    Ok(manifest)
}

/// Location and manifest of a written report.
#[derive(Debug, Clone)]
pub struct ReportBundle {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub population: Vec<EffectSummary>,
    pub map: PriorSpecFile,
    pub fits: Vec<FitRow>,
    pub sample_sizes: Vec<SampleSizeRow>,
    pub designs: Vec<DesignResult>,
}

impl ReportBundle {
    /// Convergence problems anywhere in the run.
    pub fn flags(&self) -> &[String] {
        &self.manifest.flags
    }
}

/// Meta-analysis, predictive checks, MAP prior with ESS, design grid and
/// classical sample sizes, written to the configured output directory.
pub fn end_to_end(cfg: &RunConfig) -> Result<ReportBundle> {
    cfg.validate()?;
    let mut out = OutputDir::create(cfg.resolved_output_dir())?;
    let meta = meta_stage(cfg)?;
    meta.write(&mut out)?;
    let mut flags = meta.flags();

    if cfg.checks.enabled {
        check_stage(cfg, &meta.data, &meta.fit.draws)?.write(&mut out)?;
    }
    let map = map_stage(cfg, &meta.fit.draws)?;
    map.write(&mut out)?;

    let designs = design_stage(cfg, &map.prior)?;
    if !designs.is_empty() {
        write_design_outputs(&designs, &mut out)?;
        flags.extend(design_flags(&designs));
    }
    let sample_sizes = power_stage(cfg)?;
    write_sample_sizes(&sample_sizes, &mut out)?;

    let manifest = write_manifest(cfg, &mut out, flags)?;
    Ok(ReportBundle {
        dir: out.path().to_path_buf(),
        manifest,
        population: meta.summary,
        map: map.prior,
        fits: map.fits,
        sample_sizes,
        designs,
    })
}
