//! Run configuration: flat JSON file keys, overridden by CLI flags, merged
//! into one effective config that the manifest records verbatim.

use std::path::{Path, PathBuf};

use hydrorecon::filter::DEFAULT_FILTER_THRESHOLD;
use hydrorecon::model::PriorSpec;
use hydrorecon::pipeline::PipelineSettings;
use hydrorecon::sampler::McmcConfig;
use hydrorecon::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::cli::Cli;

/// The config file: every key optional so flags and defaults can fill in.
/// Unknown keys are rejected — silent typos in a reproducibility manifest
/// are worse than a hard error.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub hydro_csv: Option<PathBuf>,
    pub proxy_csv: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub index: Option<String>,
    pub description: Option<String>,
    pub hydro_year_column: Option<String>,
    pub hydro_value_column: Option<String>,
    pub use_boxcox: Option<bool>,
    pub threshold: Option<f64>,
    pub include: Option<Vec<String>>,
    pub exclude: Option<Vec<String>>,
    pub trend: Option<bool>,
    pub alpha_sd: Option<f64>,
    pub delta_sd: Option<f64>,
    pub lambda_scale: Option<f64>,
    pub scale_halft: Option<f64>,
    pub n_chains: Option<usize>,
    pub n_iter: Option<usize>,
    pub n_burn: Option<usize>,
    pub thin: Option<usize>,
    pub adapt_len: Option<usize>,
    pub seed: Option<u64>,
    pub holdout: Option<usize>,
    pub sim_params: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        // The config file is part of the invocation, so a bad path is a
        // usage error (exit 1), unlike a missing data file (exit 2).
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("config file {}: {e}", path.display()))
        })?;
        serde_json::from_str(&text).map_err(|e| {
            Error::Config(format!("config file {}: {e}", path.display()))
        })
    }
}

/// The effective configuration of one run — file values with flag
/// overrides applied and defaults resolved. Serialized into `manifest.json`
/// exactly as used.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub hydro_csv: Option<PathBuf>,
    pub proxy_csv: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub index: String,
    pub description: String,
    pub hydro_year_column: String,
    pub hydro_value_column: String,
    pub use_boxcox: bool,
    pub threshold: f64,
    pub include: Vec<String>,
    pub exclude: Vec<String>,
    pub trend: bool,
    pub alpha_sd: f64,
    pub delta_sd: f64,
    pub lambda_scale: f64,
    pub scale_halft: f64,
    pub n_chains: usize,
    pub n_iter: usize,
    pub n_burn: usize,
    pub thin: usize,
    pub adapt_len: Option<usize>,
    pub seed: u64,
    pub holdout: usize,
    pub sim_params: Option<PathBuf>,
}

impl RunConfig {
    /// Merge file keys and flags (flags win) and resolve defaults. A seed
    /// must come from one of the two — there is no wall-clock fallback.
    pub fn merge(file: FileConfig, cli: &Cli) -> Result<RunConfig> {
        let mcmc_defaults = McmcConfig::default();
        let priors = PriorSpec::default();
        let seed = cli.seed.or(file.seed).ok_or_else(|| {
            Error::Config("a seed is required: pass --seed or set \"seed\" in the config".into())
        })?;
        let out_dir = cli
            .out
            .clone()
            .or(file.out_dir)
            .unwrap_or_else(|| PathBuf::from("out"));
        let config = RunConfig {
            hydro_csv: file.hydro_csv,
            proxy_csv: file.proxy_csv,
            out_dir,
            index: file.index.unwrap_or_else(|| "index".into()),
            description: file.description.unwrap_or_default(),
            hydro_year_column: file.hydro_year_column.unwrap_or_else(|| "year".into()),
            hydro_value_column: file.hydro_value_column.unwrap_or_else(|| "value".into()),
            use_boxcox: file.use_boxcox.unwrap_or(true),
            threshold: cli
                .threshold
                .or(file.threshold)
                .unwrap_or(DEFAULT_FILTER_THRESHOLD),
            include: file.include.unwrap_or_default(),
            exclude: file.exclude.unwrap_or_default(),
            // The flag can only switch the trend on; absence defers to the file.
            trend: cli.trend || file.trend.unwrap_or(false),
            alpha_sd: file.alpha_sd.unwrap_or(priors.alpha_sd),
            delta_sd: file.delta_sd.unwrap_or(priors.delta_sd),
            lambda_scale: file.lambda_scale.unwrap_or(priors.lambda_scale),
            scale_halft: file.scale_halft.unwrap_or(priors.scale_halft),
            n_chains: cli.chains.or(file.n_chains).unwrap_or(mcmc_defaults.n_chains),
            n_iter: cli.iters.or(file.n_iter).unwrap_or(mcmc_defaults.n_iter),
            n_burn: cli.burn.or(file.n_burn).unwrap_or(mcmc_defaults.n_burn),
            thin: cli.thin.or(file.thin).unwrap_or(mcmc_defaults.thin),
            adapt_len: file.adapt_len,
            seed,
            holdout: file.holdout.unwrap_or(hydrorecon::validation::DEFAULT_HOLDOUT),
            sim_params: file.sim_params,
        };
        Ok(config)
    }

    pub fn require_hydro(&self) -> Result<&Path> {
        self.hydro_csv
            .as_deref()
            .ok_or_else(|| Error::Config("no index series: set \"hydro_csv\" in the config".into()))
    }

    pub fn require_proxies(&self) -> Result<&Path> {
        self.proxy_csv
            .as_deref()
            .ok_or_else(|| Error::Config("no proxy table: set \"proxy_csv\" in the config".into()))
    }

    pub fn pipeline_settings(&self) -> PipelineSettings {
        PipelineSettings {
            use_boxcox: self.use_boxcox,
            threshold: self.threshold,
            overrides: hydrorecon::filter::FilterOverrides {
                include: self.include.clone(),
                exclude: self.exclude.clone(),
            },
            trend: self.trend,
            priors: PriorSpec {
                alpha_sd: self.alpha_sd,
                delta_sd: self.delta_sd,
                lambda_scale: self.lambda_scale,
                scale_halft: self.scale_halft,
            },
        }
    }

    pub fn mcmc(&self) -> McmcConfig {
        McmcConfig {
            n_chains: self.n_chains,
            n_iter: self.n_iter,
            n_burn: self.n_burn,
            thin: self.thin,
            seed: self.seed,
            adapt_len: self.adapt_len,
        }
    }

    pub fn column_spec(&self) -> hydrorecon::ingest::ColumnSpec {
        hydrorecon::ingest::ColumnSpec {
            year: self.hydro_year_column.clone(),
            value: self.hydro_value_column.clone(),
        }
    }
}
