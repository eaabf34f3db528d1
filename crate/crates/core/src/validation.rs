//! Out-of-sample check: hold out the oldest instrumental observations,
//! reconstruct them as if they were pre-instrumental, and score interval
//! coverage, mean error, and RMSE on the standardized scale.

use serde::Serialize;
use std::path::Path;

use crate::error::{Error, Result};
use crate::ingest::{HydroSeries, ProxyRecord};
use crate::pipeline::{fit, prepare, PipelineSettings, Prepared};
use crate::posterior::{summarize, Reconstruction};
use crate::sampler::{McmcConfig, PosteriorArchive};

pub const DEFAULT_HOLDOUT: usize = 15;

/// Raw-scale split: the `k` oldest observations set aside, the remainder
/// kept for fitting.
#[derive(Debug, Clone)]
pub struct HoldoutSplit {
    pub train: HydroSeries,
    /// `(year, original-unit value)` of each held-out observation, ascending.
    pub test: Vec<(i32, f64)>,
}

/// Split off the `k` oldest observations of an unprocessed series. The
/// transform and standardisation must be refit on the training part, so a
/// series that has already been processed is rejected.
pub fn holdout_split(raw: &HydroSeries, k: usize) -> Result<HoldoutSplit> {
    if raw.transform.is_some() || raw.standardization.is_some() {
        return Err(Error::Data(
            "holdout split must start from the unprocessed series".into(),
        ));
    }
    if raw.len() <= k + 10 {
        return Err(Error::Data(format!(
            "series of {} observations is too short to hold out {k}",
            raw.len()
        )));
    }
    let test = raw.years[..k]
        .iter()
        .zip(&raw.values[..k])
        .map(|(&y, &v)| (y, v))
        .collect();
    let train = HydroSeries::new(raw.years[k..].to_vec(), raw.values[k..].to_vec())?;
    Ok(HoldoutSplit { train, test })
}

/// Scores over one held-out set. Coverage is a percentage; errors are
/// `truth - posterior median` on the standardized scale, so positive mean
/// error means under-prediction.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationScore {
    pub coverage: f64,
    pub mean_error: f64,
    pub rmse: f64,
    pub n: usize,
    pub converged: bool,
}

/// Score standardized test truths against the reconstruction's standardized
/// per-year summaries. Every test year must have a summary.
pub fn score(
    test_std: &[(i32, f64)],
    recon: &Reconstruction,
    converged: bool,
) -> Result<ValidationScore> {
    if test_std.is_empty() {
        return Err(Error::Data("no held-out observations to score".into()));
    }
    let mut covered = 0usize;
    let mut sum_err = 0.0;
    let mut sum_sq = 0.0;
    for &(year, truth) in test_std {
        let s = recon.at_year(year).ok_or_else(|| {
            Error::Data(format!("reconstruction has no summary for test year {year}"))
        })?;
        if s.lower <= truth && truth <= s.upper {
            covered += 1;
        }
        let err = truth - s.median;
        sum_err += err;
        sum_sq += err * err;
    }
    let n = test_std.len();
    Ok(ValidationScore {
        coverage: 100.0 * covered as f64 / n as f64,
        mean_error: sum_err / n as f64,
        rmse: (sum_sq / n as f64).sqrt(),
        n,
        converged,
    })
}

/// Everything one validation run produces.
#[derive(Debug)]
pub struct ValidationOutcome {
    pub score: ValidationScore,
    pub reconstruction: Reconstruction,
    pub archive: PosteriorArchive,
    pub prepared: Prepared,
    pub test_years: Vec<i32>,
}

/// The full protocol: split, re-prepare (transform, standardisation and
/// filtering are refit on the training part alone), fit, summarise, score.
pub fn run_validation(
    raw_hydro: &HydroSeries,
    proxies: &[ProxyRecord],
    settings: &PipelineSettings,
    mcmc: &McmcConfig,
    k: usize,
) -> Result<ValidationOutcome> {
    let split = holdout_split(raw_hydro, k)?;
    let prepared = prepare(&split.train, proxies, settings)?;
    let archive = fit(&prepared, mcmc)?;
    let reconstruction = summarize(&archive, &prepared.hydro)?;
    let test_std = split
        .test
        .iter()
        .map(|&(y, v)| Ok((y, prepared.hydro.from_original(v)?)))
        .collect::<Result<Vec<_>>>()?;
    let score = score(&test_std, &reconstruction, archive.converged())?;
    Ok(ValidationOutcome {
        score,
        reconstruction,
        archive,
        prepared,
        test_years: split.test.iter().map(|&(y, _)| y).collect(),
    })
}

/// One row of the validation table.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationRow {
    /// Index kind, e.g. `rfi` or `spei`.
    pub index: String,
    /// Free-form label for the series (catchment, site, ...).
    pub description: String,
    #[serde(flatten)]
    pub score: ValidationScore,
}

/// `index,description,coverage,mean_error,rmse,n,converged`.
pub fn write_validation_csv(path: &Path, rows: &[ValidationRow]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    let io_err = |e: csv::Error| Error::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e),
    };
    w.write_record([
        "index",
        "description",
        "coverage",
        "mean_error",
        "rmse",
        "n",
        "converged",
    ])
    .map_err(io_err)?;
    for row in rows {
        w.write_record([
            row.index.clone(),
            row.description.clone(),
            row.score.coverage.to_string(),
            row.score.mean_error.to_string(),
            row.score.rmse.to_string(),
            row.score.n.to_string(),
            row.score.converged.to_string(),
        ])
        .map_err(io_err)?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{simulate, SimProxySpec, SimSpec};
    use crate::posterior::YearSummary;

    fn series(n: usize) -> HydroSeries {
        HydroSeries::new(
            (1900..1900 + n as i32).collect(),
            (0..n).map(|i| 10.0 + (i as f64 * 0.83).sin()).collect(),
        )
        .unwrap()
    }

    fn summary(year: i32, median: f64, lower: f64, upper: f64) -> YearSummary {
        YearSummary {
            year,
            median,
            lower,
            upper,
            sd: 1.0,
        }
    }

    fn recon_with(standardized: Vec<YearSummary>) -> Reconstruction {
        Reconstruction {
            original: standardized.clone(),
            standardized,
            instrumental: vec![(2000, 0.0)],
            flagged_params: vec![],
        }
    }

    #[test]
    fn holdout_takes_the_oldest_block() {
        let s = series(30);
        let split = holdout_split(&s, 15).unwrap();
        assert_eq!(split.test.len(), 15);
        assert_eq!(split.test[0].0, 1900);
        assert_eq!(split.test[14].0, 1914);
        assert_eq!(split.train.start_year(), 1915);
        assert_eq!(split.train.len(), 15);
    }

    #[test]
    fn holdout_identity_and_floor() {
        let s = series(20);
        let split = holdout_split(&s, 0).unwrap();
        assert!(split.test.is_empty());
        assert_eq!(split.train.len(), 20);

        assert!(holdout_split(&series(25), 20).is_err());
        assert!(holdout_split(&series(25), 15).is_err());
        assert!(holdout_split(&series(26), 15).is_ok());
    }

    #[test]
    fn holdout_rejects_processed_series() {
        let processed = crate::ingest::prepare_hydro(&series(30), false).unwrap();
        assert!(holdout_split(&processed, 5).is_err());
    }

    #[test]
    fn score_hand_case() {
        // Truths {0, 2}, medians {1, 1}, only the first truth covered.
        let recon = recon_with(vec![
            summary(1900, 1.0, -0.5, 1.5),
            summary(1901, 1.0, 0.5, 1.5),
        ]);
        let s = score(&[(1900, 0.0), (1901, 2.0)], &recon, true).unwrap();
        assert_eq!(s.coverage, 50.0);
        assert_eq!(s.mean_error, 0.0);
        assert_eq!(s.rmse, 1.0);
        assert_eq!(s.n, 2);
        assert!(s.rmse >= s.mean_error.abs());
    }

    #[test]
    fn perfect_predictions_score_cleanly() {
        let recon = recon_with(vec![
            summary(1900, 0.3, 0.1, 0.5),
            summary(1901, -0.2, -0.4, 0.0),
        ]);
        let s = score(&[(1900, 0.3), (1901, -0.2)], &recon, true).unwrap();
        assert_eq!(s.coverage, 100.0);
        assert_eq!(s.mean_error, 0.0);
        assert_eq!(s.rmse, 0.0);
    }

    #[test]
    fn positive_mean_error_means_under_prediction() {
        let recon = recon_with(vec![summary(1900, 1.0, 0.0, 2.0)]);
        let s = score(&[(1900, 1.8)], &recon, true).unwrap();
        assert!(s.mean_error > 0.0);
    }

    #[test]
    fn score_is_permutation_invariant() {
        let recon = recon_with(vec![
            summary(1900, 0.0, -1.0, 1.0),
            summary(1901, 0.5, -0.5, 1.5),
            summary(1902, -0.3, -1.3, 0.7),
        ]);
        let pts = [(1900, 0.4), (1901, -0.9), (1902, 0.1)];
        let a = score(&pts, &recon, true).unwrap();
        let rev: Vec<_> = pts.iter().rev().copied().collect();
        let b = score(&rev, &recon, true).unwrap();
        assert_eq!(a.coverage, b.coverage);
        assert_eq!(a.mean_error, b.mean_error);
        assert_eq!(a.rmse, b.rmse);
    }

    #[test]
    fn missing_test_year_is_an_error() {
        let recon = recon_with(vec![summary(1900, 0.0, -1.0, 1.0)]);
        assert!(score(&[(1899, 0.0)], &recon, true).is_err());
        assert!(score(&[], &recon, true).is_err());
    }

    #[test]
    fn protocol_runs_end_to_end_on_synthetic_data() {
        let sim = SimSpec {
            grid_start: 1900,
            grid_end: 1999,
            instrumental_start: 1940,
            instrumental_end: 1999,
            trend: false,
            omega: 0.0,
            delta: 0.0,
            rho: 0.4,
            nu: 0.5,
            tau: 0.35,
            proxies: vec![SimProxySpec {
                id: "p1".into(),
                archive: "coral".into(),
                lag: 0,
                obs_years: (1900..2000).collect(),
                alpha: 0.0,
                beta1: 1.1,
                beta2: 0.05,
                sigma: 0.4,
            }],
            seed: 99,
        };
        let out = simulate(&sim).unwrap();
        let settings = PipelineSettings {
            use_boxcox: false,
            ..PipelineSettings::default()
        };
        let mcmc = McmcConfig {
            n_chains: 2,
            n_iter: 700,
            n_burn: 300,
            thin: 2,
            seed: 21,
            adapt_len: None,
        };
        let outcome = run_validation(&out.hydro, &out.proxies, &settings, &mcmc, 15).unwrap();
        assert_eq!(outcome.score.n, 15);
        assert_eq!(outcome.test_years.len(), 15);
        assert_eq!(outcome.test_years[0], 1940);
        assert!((0.0..=100.0).contains(&outcome.score.coverage));
        assert!(outcome.score.rmse >= outcome.score.mean_error.abs());
        assert!(outcome.score.rmse.is_finite());
        // Held-out years are reconstructed: they appear in the archive.
        for y in &outcome.test_years {
            assert!(outcome.reconstruction.at_year(*y).is_some());
        }
    }

    #[test]
    fn validation_csv_schema() {
        let rows = vec![ValidationRow {
            index: "rfi".into(),
            description: "synthetic".into(),
            score: ValidationScore {
                coverage: 86.7,
                mean_error: -0.1,
                rmse: 0.9,
                n: 15,
                converged: true,
            },
        }];
        let dir = std::env::temp_dir().join(format!("validation-test-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("validation.csv");
        write_validation_csv(&path, &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "index,description,coverage,mean_error,rmse,n,converged"
        );
        assert_eq!(lines.next().unwrap(), "rfi,synthetic,86.7,-0.1,0.9,15,true");
        std::fs::remove_dir_all(&dir).ok();
    }
}
