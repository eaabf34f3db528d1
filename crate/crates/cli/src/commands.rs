//! Subcommand implementations. Each writes its artifacts plus
//! `manifest.json` into the output directory, logs a short account of the
//! run, and returns the process exit code.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use hydrorecon::filter::FilterReport;
use hydrorecon::ingest::{self, HydroSeries, ProxyRecord};
use hydrorecon::model::SimSpec;
use hydrorecon::pipeline::{self, Prepared};
use hydrorecon::posterior::{self, ExceedanceTable};
use hydrorecon::sampler::PosteriorArchive;
use hydrorecon::validation::{self, ValidationRow};
use hydrorecon::Error;
use serde::Serialize;

use crate::cli::{Cli, Command};
use crate::config::{FileConfig, RunConfig};
use crate::manifest;

/// Merge the config, run the subcommand, return the exit code.
pub fn run(cli: &Cli) -> Result<i32> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let mut cfg = RunConfig::merge(file, cli)?;
    // Fold subcommand flags in as well, so the manifest records what ran.
    match &cli.command {
        Command::Validate { holdout: Some(k) } => cfg.holdout = *k,
        Command::Simulate { params: Some(p) } => cfg.sim_params = Some(p.clone()),
        _ => {}
    }
    fs::create_dir_all(&cfg.out_dir)
        .with_context(|| format!("creating {}", cfg.out_dir.display()))?;
    match cli.command {
        Command::Filter => cmd_filter(&cfg),
        Command::Fit => cmd_fit(&cfg),
        Command::Reconstruct => cmd_reconstruct(&cfg),
        Command::Validate { .. } => cmd_validate(&cfg),
        Command::Simulate { .. } => cmd_simulate(&cfg),
    }
}

/// The instrumental series and proxy table, with the paths they came from
/// (the manifest fingerprints exactly what was read).
struct DataRun<'a> {
    hydro_path: &'a Path,
    proxy_path: &'a Path,
    raw: HydroSeries,
    proxies: Vec<ProxyRecord>,
}

fn load_data(cfg: &RunConfig) -> Result<DataRun<'_>> {
    let hydro_path = cfg.require_hydro()?;
    let proxy_path = cfg.require_proxies()?;
    let raw = ingest::load_hydro(hydro_path, &cfg.column_spec())?;
    let proxies = ingest::load_proxies(proxy_path)?;
    Ok(DataRun {
        hydro_path,
        proxy_path,
        raw,
        proxies,
    })
}

fn log_warnings(prepared: &Prepared) {
    for w in &prepared.warnings {
        log::warn!("{w}");
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file =
        fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    serde_json::to_writer_pretty(BufWriter::new(file), value)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn write_filter_csv(out_dir: &Path, report: &FilterReport) -> Result<()> {
    let path = out_dir.join("filter.csv");
    let file =
        fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    report
        .write_csv(&mut w)
        .and_then(|()| w.flush())
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

#[derive(Serialize)]
struct DiagnosticsFile<'a> {
    converged: bool,
    params: &'a [hydrorecon::sampler::ParamDiag],
    acceptance: &'a [hydrorecon::sampler::ChainAcceptance],
}

fn write_diagnostics(out_dir: &Path, archive: &PosteriorArchive) -> Result<()> {
    write_json(
        &out_dir.join("diagnostics.json"),
        &DiagnosticsFile {
            converged: archive.converged(),
            params: &archive.diagnostics,
            acceptance: &archive.acceptance,
        },
    )
}

/// Exit code 3 signals "finished, but look at the diagnostics" — artifacts
/// are written either way.
fn convergence_exit(archive: &PosteriorArchive) -> i32 {
    let flagged = archive.flagged_params();
    if flagged.is_empty() {
        return 0;
    }
    let shown: Vec<&str> = flagged.iter().take(8).map(|d| d.name.as_str()).collect();
    let rest = flagged.len() - shown.len();
    if rest > 0 {
        log::warn!(
            "convergence flags on {} parameters: {}, +{rest} more",
            flagged.len(),
            shown.join(", ")
        );
    } else {
        log::warn!(
            "convergence flags on {} parameters: {}",
            flagged.len(),
            shown.join(", ")
        );
    }
    3
}

fn cmd_filter(cfg: &RunConfig) -> Result<i32> {
    let data = load_data(cfg)?;
    let prepared = pipeline::prepare(&data.raw, &data.proxies, &cfg.pipeline_settings())?;
    log_warnings(&prepared);
    write_filter_csv(&cfg.out_dir, &prepared.report)?;
    manifest::write(
        &cfg.out_dir,
        "filter",
        cfg,
        &[data.hydro_path, data.proxy_path],
    )?;
    log::info!(
        "kept {} of {} proxy records at threshold {}",
        prepared.report.kept_ids().len(),
        prepared.report.rows.len(),
        prepared.report.threshold
    );
    Ok(0)
}

fn cmd_fit(cfg: &RunConfig) -> Result<i32> {
    cfg.mcmc().validate()?;
    let data = load_data(cfg)?;
    let prepared = pipeline::prepare(&data.raw, &data.proxies, &cfg.pipeline_settings())?;
    log_warnings(&prepared);
    let archive = pipeline::fit(&prepared, &cfg.mcmc())?;
    archive.write_draws_csv(&cfg.out_dir.join("draws.csv"))?;
    write_filter_csv(&cfg.out_dir, &prepared.report)?;
    write_diagnostics(&cfg.out_dir, &archive)?;
    manifest::write(
        &cfg.out_dir,
        "fit",
        cfg,
        &[data.hydro_path, data.proxy_path],
    )?;
    log::info!(
        "archived {} draws across {} chains, {} parameters",
        archive.total_draws(),
        archive.config.n_chains,
        archive.n_params()
    );
    Ok(convergence_exit(&archive))
}

fn log_exceedance_highlights(table: &ExceedanceTable) {
    let mut shown = 0usize;
    let mut notable = 0usize;
    for row in &table.rows {
        if row.p_below_min.max(row.p_above_max) < 0.5 {
            continue;
        }
        notable += 1;
        if shown < 12 {
            log::info!(
                "{}: {:.1}% below the instrumental minimum, {:.1}% above the maximum",
                row.year,
                100.0 * row.p_below_min,
                100.0 * row.p_above_max
            );
            shown += 1;
        }
    }
    if notable > shown {
        log::info!("... and {} more years past the 50% mark", notable - shown);
    }
}

fn cmd_reconstruct(cfg: &RunConfig) -> Result<i32> {
    cfg.mcmc().validate()?;
    let data = load_data(cfg)?;
    let prepared = pipeline::prepare(&data.raw, &data.proxies, &cfg.pipeline_settings())?;
    log_warnings(&prepared);
    let archive = pipeline::fit(&prepared, &cfg.mcmc())?;
    let recon = posterior::summarize(&archive, &prepared.hydro)?;
    recon.write_csv(&cfg.out_dir.join("reconstruction.csv"))?;
    let (lo, hi) = prepared.instrumental_extremes();
    let table = posterior::exceedance(&archive, lo, hi)?;
    table.write_csv(&cfg.out_dir.join("exceedance.csv"))?;
    let stats = posterior::summary_stats(&recon)?;
    write_json(&cfg.out_dir.join("summary.json"), &stats)?;
    write_filter_csv(&cfg.out_dir, &prepared.report)?;
    write_diagnostics(&cfg.out_dir, &archive)?;
    manifest::write(
        &cfg.out_dir,
        "reconstruct",
        cfg,
        &[data.hydro_path, data.proxy_path],
    )?;
    log_exceedance_highlights(&table);
    log::info!(
        "reconstructed {} years from {} retained draws",
        recon.standardized.len(),
        archive.total_draws()
    );
    Ok(convergence_exit(&archive))
}

fn cmd_validate(cfg: &RunConfig) -> Result<i32> {
    cfg.mcmc().validate()?;
    let data = load_data(cfg)?;
    let outcome = validation::run_validation(
        &data.raw,
        &data.proxies,
        &cfg.pipeline_settings(),
        &cfg.mcmc(),
        cfg.holdout,
    )?;
    log_warnings(&outcome.prepared);
    let rows = vec![ValidationRow {
        index: cfg.index.clone(),
        description: cfg.description.clone(),
        score: outcome.score.clone(),
    }];
    validation::write_validation_csv(&cfg.out_dir.join("validation.csv"), &rows)?;
    write_diagnostics(&cfg.out_dir, &outcome.archive)?;
    manifest::write(
        &cfg.out_dir,
        "validate",
        cfg,
        &[data.hydro_path, data.proxy_path],
    )?;
    let s = &outcome.score;
    log::info!(
        "held out {} oldest years: coverage {:.1}%, mean error {:.3}, rmse {:.3}",
        s.n,
        s.coverage,
        s.mean_error,
        s.rmse
    );
    Ok(convergence_exit(&outcome.archive))
}

fn cmd_simulate(cfg: &RunConfig) -> Result<i32> {
    let params_path = cfg.sim_params.as_deref().ok_or_else(|| {
        Error::Config("simulate needs --params or \"sim_params\" in the config".into())
    })?;
    let text = fs::read_to_string(params_path).map_err(|source| Error::Io {
        path: params_path.to_path_buf(),
        source,
    })?;
    let mut spec: SimSpec = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("scenario file {}: {e}", params_path.display())))?;
    // The run seed governs the draw; a seed in the scenario file is only a
    // default for runs outside this tool.
    spec.seed = cfg.seed;
    let out = hydrorecon::model::simulate(&spec)?;
    ingest::write_hydro_csv(&cfg.out_dir.join("hydro.csv"), &out.hydro)?;
    ingest::write_proxies_csv(&cfg.out_dir.join("proxies.csv"), &out.proxies)?;
    ingest::write_year_values_csv(
        &cfg.out_dir.join("truth.csv"),
        out.grid.years().zip(out.truth.iter().copied()),
    )?;
    manifest::write(&cfg.out_dir, "simulate", cfg, &[params_path])?;
    log::info!(
        "simulated {} proxies over {}..{}, {} instrumental years",
        out.proxies.len(),
        out.grid.start(),
        out.grid.end(),
        out.hydro.years.len()
    );
    Ok(0)
}
