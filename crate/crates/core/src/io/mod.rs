//! Data ingestion, run configuration and report emission.

mod config;
mod ingest;
mod report;

pub use config::{
    ChecksConfig, DataConfig, DesignConfig, MapConfig, McmcConfig, MetaConfig, PowerConfig,
    PowerRow, PriorChoice, PriorOverrides, RunConfig, ThetaFamily, OUTPUT_ENV,
};
pub use ingest::{ingest_historical, parse_historical};
pub use report::{
    canonical_config, check_stage, design_flags, design_stage, end_to_end, map_stage, meta_stage,
    power_stage, write_design_outputs, write_manifest, write_sample_sizes, CheckStage, FileDigest,
    FitRow, Manifest, MapStage, MetaStage, OutputDir, ReportBundle, SampleSizeRow, CHECK_BANDS,
    CHECK_STATS, DESIGN_METRICS, MANIFEST, META_DIAGNOSTICS, META_DRAWS, PARAMETRIC_FITS,
    POPULATION_SUMMARY, PRIOR_DEFAULT_WIDE, PRIOR_MANUAL, PRIOR_SPEC, REPLICATE_OUTCOMES,
    RULE_METRICS, SAMPLE_SIZES, SHRINKAGE,
};
