//! Configuration, file ingest/emit, and run artifacts for the CLI.

pub mod artifacts;
pub mod config;
pub mod files;

pub use artifacts::{config_digest, read_fit, resolve_path, sha256_file, sha256_hex, Manifest};
pub use config::{
    Aggregation, GridSpec, McmcBlock, ModelBlock, ParamsSpec, PhiChoice, PredictionBlock,
    PriorChoice, RunConfig, SiteSpec,
};
pub use files::{
    emit_dataset, ingest, next_step_covariates, read_stations, write_covariates,
    write_observations, write_stations, CovariateScale, Dataset, ELEVATION_COVARIATE,
};
