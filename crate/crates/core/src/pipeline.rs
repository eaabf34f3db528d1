//! End-to-end assembly: raw series + proxy records in, model-ready data and
//! a fitted posterior out. The CLI and the validation harness both run
//! through this path so they cannot drift apart.

use crate::error::Result;
use crate::filter::{apply_filter, FilterOverrides, FilterReport, DEFAULT_FILTER_THRESHOLD};
use crate::ingest::{align, prepare_hydro, standardize_proxy, AlignedRecord, HydroSeries, ProxyRecord, TimeGrid};
use crate::model::{ModelData, ModelSpec, PriorSpec};
use crate::sampler::{run_chains, McmcConfig, PosteriorArchive};

/// Knobs for data preparation and model structure.
#[derive(Debug, Clone)]
pub struct PipelineSettings {
    /// Fit and apply a power transform to the index before z-scoring.
    pub use_boxcox: bool,
    /// Range-filter threshold on the F measure.
    pub threshold: f64,
    pub overrides: FilterOverrides,
    /// Include the linear time trend in the index mean.
    pub trend: bool,
    pub priors: PriorSpec,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        PipelineSettings {
            use_boxcox: true,
            threshold: DEFAULT_FILTER_THRESHOLD,
            overrides: FilterOverrides::default(),
            trend: false,
            priors: PriorSpec::default(),
        }
    }
}

/// Everything `prepare` produces: the processed series, the surviving
/// records, the filter audit trail, and model-ready inputs on a grid
/// trimmed to the years the kept records can actually inform.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub hydro: HydroSeries,
    pub records: Vec<AlignedRecord>,
    pub report: FilterReport,
    pub data: ModelData,
    pub spec: ModelSpec,
    pub warnings: Vec<String>,
}

impl Prepared {
    /// Instrumental extremes on the standardized scale — the thresholds the
    /// exceedance probabilities are defined against.
    pub fn instrumental_extremes(&self) -> (f64, f64) {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for &v in &self.hydro.values {
            min = min.min(v);
            max = max.max(v);
        }
        (min, max)
    }
}

/// Transform and standardise the index, standardise each proxy record,
/// align them onto the instrumental calendar, apply the range filter, and
/// assemble model inputs on a grid starting at the earliest year a kept
/// record reaches.
pub fn prepare(
    raw_hydro: &HydroSeries,
    proxies: &[ProxyRecord],
    settings: &PipelineSettings,
) -> Result<Prepared> {
    let hydro = prepare_hydro(raw_hydro, settings.use_boxcox)?;
    let standardized: Vec<ProxyRecord> = proxies
        .iter()
        .map(standardize_proxy)
        .collect::<Result<_>>()?;
    let alignment = align(&standardized, &hydro)?;
    let (kept, report) = apply_filter(&alignment.records, settings.threshold, &settings.overrides)?;

    // Trim the grid: years before any kept record's reach carry no
    // information and would only be prior draws.
    let earliest = kept
        .iter()
        .flat_map(|r| r.obs.iter().map(|o| o.target_year))
        .min()
        .expect("apply_filter guarantees a non-empty kept set");
    let grid = TimeGrid::new(earliest.min(hydro.start_year()), hydro.end_year())?;
    let data = ModelData::new(&kept, &hydro, grid)?;
    let spec = ModelSpec::for_data(&data, settings.trend, settings.priors)?;
    Ok(Prepared {
        hydro,
        records: kept,
        report,
        data,
        spec,
        warnings: alignment.warnings,
    })
}

/// Run the sampler on prepared inputs.
pub fn fit(prepared: &Prepared, mcmc: &McmcConfig) -> Result<PosteriorArchive> {
    run_chains(&prepared.data, &prepared.spec, mcmc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{simulate, SimProxySpec, SimSpec};

    fn sim_inputs(seed: u64) -> (HydroSeries, Vec<ProxyRecord>) {
        let sim = SimSpec {
            grid_start: 1880,
            grid_end: 1999,
            instrumental_start: 1930,
            instrumental_end: 1999,
            trend: false,
            omega: 0.0,
            delta: 0.0,
            rho: 0.5,
            nu: 0.5,
            tau: 0.4,
            proxies: vec![
                SimProxySpec {
                    id: "deep".into(),
                    archive: "coral".into(),
                    lag: 0,
                    obs_years: (1880..2000).collect(),
                    alpha: 0.1,
                    beta1: 1.2,
                    beta2: 0.0,
                    sigma: 0.4,
                },
                SimProxySpec {
                    id: "shallow".into(),
                    archive: "tree ring".into(),
                    lag: 0,
                    obs_years: (1935..2000).collect(),
                    alpha: 0.0,
                    beta1: 0.8,
                    beta2: 0.1,
                    sigma: 0.5,
                },
            ],
            seed,
        };
        let out = simulate(&sim).unwrap();
        (out.hydro, out.proxies)
    }

    #[test]
    fn prepare_wires_filter_and_grid_together() {
        let (hydro, proxies) = sim_inputs(2);
        let settings = PipelineSettings {
            use_boxcox: false,
            ..PipelineSettings::default()
        };
        let prepared = prepare(&hydro, &proxies, &settings).unwrap();
        // "shallow" has no pre-instrumental reach, so the grid is set by
        // "deep" (1880) through the instrumental end.
        assert_eq!(prepared.data.grid.start(), 1880);
        assert_eq!(prepared.data.grid.end(), 1999);
        assert_eq!(prepared.records.len(), 2);
        assert_eq!(prepared.report.rows.len(), 2);
        // The processed series is standardised.
        assert!(prepared.hydro.standardization.is_some());
        let mean = prepared.hydro.values.iter().sum::<f64>() / prepared.hydro.len() as f64;
        assert!(mean.abs() < 1e-12);
        let (lo, hi) = prepared.instrumental_extremes();
        assert!(lo < hi);
    }

    #[test]
    fn grid_shrinks_when_long_record_is_excluded() {
        let (hydro, proxies) = sim_inputs(3);
        let settings = PipelineSettings {
            use_boxcox: false,
            overrides: FilterOverrides {
                include: vec![],
                exclude: vec!["deep".into()],
            },
            ..PipelineSettings::default()
        };
        let prepared = prepare(&hydro, &proxies, &settings).unwrap();
        assert_eq!(prepared.records.len(), 1);
        assert_eq!(prepared.records[0].id, "shallow");
        // Without "deep", nothing reaches before 1935; instrumental span
        // still anchors the grid start.
        assert_eq!(prepared.data.grid.start(), 1930);
    }

    #[test]
    fn fit_runs_on_prepared_inputs() {
        let (hydro, proxies) = sim_inputs(4);
        let settings = PipelineSettings {
            use_boxcox: false,
            ..PipelineSettings::default()
        };
        let prepared = prepare(&hydro, &proxies, &settings).unwrap();
        let mcmc = McmcConfig {
            n_chains: 1,
            n_iter: 250,
            n_burn: 120,
            thin: 1,
            seed: 11,
            adapt_len: None,
        };
        let archive = fit(&prepared, &mcmc).unwrap();
        assert_eq!(archive.total_draws(), 130);
        assert_eq!(
            archive.recon_years.len(),
            prepared.data.n_recon()
        );
    }
}
