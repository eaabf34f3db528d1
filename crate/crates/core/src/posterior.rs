//! Posterior summaries: credible intervals per reconstruction year,
//! exceedance probabilities against the instrumental extremes, and
//! period-level summary statistics.

use serde::Serialize;
use std::path::Path;

use crate::error::{Error, Result};
use crate::ingest::HydroSeries;
use crate::sampler::PosteriorArchive;

/// Type-7 empirical quantile (linear interpolation between order
/// statistics). `sorted` must be ascending and non-empty; `p` in [0, 1].
pub fn quantile_type7(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    debug_assert!((0.0..=1.0).contains(&p));
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    if lo + 1 >= n {
        return sorted[n - 1];
    }
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
}

/// Credible-interval summary of one reconstruction year on one scale.
#[derive(Debug, Clone, Serialize)]
pub struct YearSummary {
    pub year: i32,
    pub median: f64,
    pub lower: f64,
    pub upper: f64,
    /// Posterior standard deviation of the draws for this year (same scale
    /// as the quantiles).
    pub sd: f64,
}

/// Full reconstruction summary: per-year 95% credible intervals on the
/// standardized scale and in original units, plus the instrumental series
/// echo and the names of any convergence-flagged parameters.
#[derive(Debug, Clone, Serialize)]
pub struct Reconstruction {
    pub standardized: Vec<YearSummary>,
    pub original: Vec<YearSummary>,
    /// `(year, value)` of the instrumental series in original units.
    pub instrumental: Vec<(i32, f64)>,
    pub flagged_params: Vec<String>,
}

impl Reconstruction {
    pub fn at_year(&self, year: i32) -> Option<&YearSummary> {
        self.standardized.iter().find(|s| s.year == year)
    }

    /// `year,median,lower95,upper95,unit` with one standardized and one
    /// original-units row per year.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
        let io_err = |e: csv::Error| Error::Io {
            path: path.to_path_buf(),
            source: std::io::Error::other(e),
        };
        w.write_record(["year", "median", "lower95", "upper95", "unit"])
            .map_err(io_err)?;
        for (s, o) in self.standardized.iter().zip(&self.original) {
            for (row, unit) in [(s, "standardized"), (o, "original")] {
                w.write_record([
                    row.year.to_string(),
                    row.median.to_string(),
                    row.lower.to_string(),
                    row.upper.to_string(),
                    unit.to_string(),
                ])
                .map_err(io_err)?;
            }
        }
        w.flush().map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(())
    }
}

fn sd_of(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    (ss / (n - 1.0)).sqrt()
}

/// Summarise the latent index draws: pooled empirical quantiles per year,
/// back-transformed to original units through the series' recorded
/// standardisation and power transform (quantiles commute with monotone
/// maps; the standard deviation is recomputed from back-transformed draws).
pub fn summarize(archive: &PosteriorArchive, hydro: &HydroSeries) -> Result<Reconstruction> {
    let offset = archive.recon_offset();
    let mut standardized = Vec::with_capacity(archive.recon_years.len());
    let mut original = Vec::with_capacity(archive.recon_years.len());
    for (k, &year) in archive.recon_years.iter().enumerate() {
        let name = format!("I_r[{year}]");
        let p = offset + k;
        if archive.param_names.get(p) != Some(&name) {
            return Err(Error::Data(format!(
                "archive is missing draws for year {year}"
            )));
        }
        let mut draws = archive.pooled(p);
        if draws.is_empty() {
            return Err(Error::Data(format!("no draws archived for year {year}")));
        }
        draws.sort_by(|a, b| a.partial_cmp(b).expect("finite draws"));
        let (lower, median, upper) = (
            quantile_type7(&draws, 0.025),
            quantile_type7(&draws, 0.5),
            quantile_type7(&draws, 0.975),
        );
        standardized.push(YearSummary {
            year,
            median,
            lower,
            upper,
            sd: sd_of(&draws),
        });
        let back: Vec<f64> = draws.iter().map(|&z| hydro.to_original(z)).collect();
        original.push(YearSummary {
            year,
            median: hydro.to_original(median),
            lower: hydro.to_original(lower),
            upper: hydro.to_original(upper),
            sd: sd_of(&back),
        });
    }
    // Stored values sit exactly as deep in the transform chain as the
    // recorded fields say, so `to_original` recovers raw units from any
    // pipeline stage.
    let instrumental = hydro
        .years
        .iter()
        .zip(&hydro.values)
        .map(|(&y, &v)| (y, hydro.to_original(v)))
        .collect();
    Ok(Reconstruction {
        standardized,
        original,
        instrumental,
        flagged_params: archive
            .flagged_params()
            .iter()
            .map(|d| d.name.clone())
            .collect(),
    })
}

/// Exceedance probabilities of the instrumental extremes, per
/// reconstruction year.
#[derive(Debug, Clone, Serialize)]
pub struct ExceedanceRow {
    pub year: i32,
    /// Fraction of draws strictly below the instrumental minimum.
    pub p_below_min: f64,
    /// `1 - fraction of draws strictly below the instrumental maximum`, so
    /// draws equal to the maximum count as exceeding it.
    pub p_above_max: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExceedanceTable {
    pub rows: Vec<ExceedanceRow>,
    pub instrumental_min: f64,
    pub instrumental_max: f64,
    /// Pooled draw count behind every probability.
    pub n_draws: usize,
}

impl ExceedanceTable {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
        let io_err = |e: csv::Error| Error::Io {
            path: path.to_path_buf(),
            source: std::io::Error::other(e),
        };
        w.write_record(["year", "p_below_min", "p_above_max"])
            .map_err(io_err)?;
        for row in &self.rows {
            w.write_record([
                row.year.to_string(),
                row.p_below_min.to_string(),
                row.p_above_max.to_string(),
            ])
            .map_err(io_err)?;
        }
        w.flush().map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(())
    }
}

/// Empirical exceedance frequencies over pooled draws. Both thresholds must
/// be on the same scale as the archived draws. The below-minimum count is
/// strict (`draw < min`); the above-maximum probability is the complement of
/// the strict below-maximum count (`1 - #(draw < max)/N`).
pub fn exceedance(
    archive: &PosteriorArchive,
    instrumental_min: f64,
    instrumental_max: f64,
) -> Result<ExceedanceTable> {
    if archive.total_draws() == 0 {
        return Err(Error::Data("archive holds no draws".into()));
    }
    let offset = archive.recon_offset();
    let mut rows = Vec::with_capacity(archive.recon_years.len());
    for (k, &year) in archive.recon_years.iter().enumerate() {
        let draws = archive.pooled(offset + k);
        let n = draws.len() as f64;
        let below_min = draws.iter().filter(|&&d| d < instrumental_min).count() as f64;
        let below_max = draws.iter().filter(|&&d| d < instrumental_max).count() as f64;
        rows.push(ExceedanceRow {
            year,
            p_below_min: below_min / n,
            p_above_max: 1.0 - below_max / n,
        });
    }
    Ok(ExceedanceTable {
        rows,
        instrumental_min,
        instrumental_max,
        n_draws: archive.total_draws(),
    })
}

/// Period-level comparison, original units. The reconstruction-period spread
/// is reported two ways: the spread of the per-year posterior medians and
/// the mean per-year posterior standard deviation — genuinely different
/// quantities, both labelled.
#[derive(Debug, Clone, Serialize)]
pub struct SummaryStats {
    pub recon_years: usize,
    /// Mean of per-year posterior medians.
    pub recon_mean_of_medians: f64,
    /// Standard deviation across the per-year posterior medians.
    pub recon_sd_of_medians: f64,
    /// Mean of per-year posterior standard deviations.
    pub recon_mean_posterior_sd: f64,
    pub instrumental_obs: usize,
    pub instrumental_mean: f64,
    pub instrumental_sd: f64,
}

pub fn summary_stats(recon: &Reconstruction) -> Result<SummaryStats> {
    if recon.original.is_empty() {
        return Err(Error::Data("empty reconstruction period".into()));
    }
    if recon.instrumental.is_empty() {
        return Err(Error::Data("empty instrumental period".into()));
    }
    let medians: Vec<f64> = recon.original.iter().map(|s| s.median).collect();
    let sds: Vec<f64> = recon.original.iter().map(|s| s.sd).collect();
    let instr: Vec<f64> = recon.instrumental.iter().map(|&(_, v)| v).collect();
    Ok(SummaryStats {
        recon_years: medians.len(),
        recon_mean_of_medians: medians.iter().sum::<f64>() / medians.len() as f64,
        recon_sd_of_medians: sd_of(&medians),
        recon_mean_posterior_sd: sds.iter().sum::<f64>() / sds.len() as f64,
        instrumental_obs: instr.len(),
        instrumental_mean: instr.iter().sum::<f64>() / instr.len() as f64,
        instrumental_sd: sd_of(&instr),
    })
}
