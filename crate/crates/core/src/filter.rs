//! Range-consistency screening of proxy records.
//!
//! A proxy whose pre-instrumental values wander far outside the range it
//! occupies during the calibration period cannot be anchored by the
//! calibration fit. For each record the screen computes, on the standardised
//! scale,
//!
//! ```text
//! F = max(|mean_c - min_r|, |max_r - mean_c|) / sd_c
//! ```
//!
//! where `mean_c`, `sd_c` are calibration-period statistics and `min_r`,
//! `max_r` the extremes over the reconstruction period. Records with
//! `F > threshold` are dropped, as are records with at most one calibration
//! observation (no usable calibration variance).

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::AlignedRecord;

/// Default screening threshold.
pub const DEFAULT_FILTER_THRESHOLD: f64 = 3.5;

/// Outcome of the screen for one record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterDecision {
    Kept,
    /// Reconstruction-period range too far from the calibration mean.
    FilteredRange,
    /// At most one calibration observation.
    FilteredSingleObs,
    /// Removed by a manual exclude list.
    FilteredManual,
}

impl FilterDecision {
    pub fn is_kept(self) -> bool {
        self == FilterDecision::Kept
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FilterDecision::Kept => "kept",
            FilterDecision::FilteredRange => "filtered_range",
            FilterDecision::FilteredSingleObs => "filtered_single_obs",
            FilterDecision::FilteredManual => "filtered_manual",
        }
    }
}

/// Per-record screening detail.
#[derive(Debug, Clone, Serialize)]
pub struct FilterRow {
    pub id: String,
    /// Range-consistency measure; `None` when it is not defined (fewer than
    /// two calibration observations or no reconstruction observations).
    pub f: Option<f64>,
    pub calib_n: usize,
    pub calib_mean: Option<f64>,
    pub calib_sd: Option<f64>,
    pub recon_n: usize,
    pub recon_min: Option<f64>,
    pub recon_max: Option<f64>,
    pub decision: FilterDecision,
    pub reason: String,
}

/// Screening outcome for a proxy network.
#[derive(Debug, Clone, Serialize)]
pub struct FilterReport {
    pub threshold: f64,
    pub rows: Vec<FilterRow>,
}

impl FilterReport {
    pub fn kept_ids(&self) -> Vec<&str> {
        self.rows
            .iter()
            .filter(|r| r.decision.is_kept())
            .map(|r| r.id.as_str())
            .collect()
    }

    /// Serialise as CSV with columns `dataset_id,F,decision,reason`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "dataset_id,F,decision,reason")?;
        for row in &self.rows {
            let f = match row.f {
                Some(v) if v.is_finite() => format!("{v}"),
                Some(_) => "inf".to_string(),
                None => String::new(),
            };
            writeln!(w, "{},{},{},{}", row.id, f, row.decision.as_str(), row.reason)?;
        }
        Ok(())
    }
}

/// Manual keep/drop overrides, applied after the automatic decision.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FilterOverrides {
    pub include: Vec<String>,
    pub exclude: Vec<String>,
}

fn calibration_stats(record: &AlignedRecord) -> (usize, Option<f64>, Option<f64>) {
    let values = record.calibration_values();
    let n = values.len();
    if n == 0 {
        return (0, None, None);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (1, Some(mean), None);
    }
    let ss = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    (n, Some(mean), Some((ss / (n as f64 - 1.0)).sqrt()))
}

fn reconstruction_range(record: &AlignedRecord) -> (usize, Option<f64>, Option<f64>) {
    let values = record.reconstruction_values();
    if values.is_empty() {
        return (0, None, None);
    }
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (values.len(), Some(min), Some(max))
}

/// Range-consistency measure for one record.
///
/// Requires at least two calibration observations and at least one
/// reconstruction observation. A zero calibration standard deviation yields
/// `+inf` (the reconstruction range can never be consistent with a
/// degenerate calibration distribution).
pub fn filter_measure(record: &AlignedRecord) -> Result<f64> {
    let (calib_n, mean, sd) = calibration_stats(record);
    if calib_n < 2 {
        return Err(Error::Data(format!(
            "proxy {}: range measure needs at least two calibration observations",
            record.id
        )));
    }
    let (recon_n, min, max) = reconstruction_range(record);
    if recon_n == 0 {
        return Err(Error::Data(format!(
            "proxy {}: range measure needs at least one reconstruction observation",
            record.id
        )));
    }
    let (mean, sd) = (mean.unwrap(), sd.unwrap());
    if sd == 0.0 {
        return Ok(f64::INFINITY);
    }
    let below = (mean - min.unwrap()).abs() / sd;
    let above = (max.unwrap() - mean).abs() / sd;
    Ok(below.max(above))
}

/// Screen a proxy network.
///
/// Decision order per record: manual exclude, then the single-calibration-
/// observation rule, then `F > threshold` (records without reconstruction
/// observations are kept; there is no range to check). Manual include
/// overrides any automatic drop. Errors if no records survive.
pub fn apply_filter(
    records: &[AlignedRecord],
    threshold: f64,
    overrides: &FilterOverrides,
) -> Result<(Vec<AlignedRecord>, FilterReport)> {
    if !(threshold > 0.0) {
        return Err(Error::Config(format!(
            "filter threshold must be positive, got {threshold}"
        )));
    }
    for id in overrides.include.iter().chain(&overrides.exclude) {
        if !records.iter().any(|r| &r.id == id) {
            return Err(Error::Config(format!(
                "filter override references unknown proxy '{id}'"
            )));
        }
    }
    if overrides
        .include
        .iter()
        .any(|id| overrides.exclude.contains(id))
    {
        return Err(Error::Config(
            "a proxy appears in both include and exclude lists".into(),
        ));
    }

    let mut rows = Vec::with_capacity(records.len());
    let mut kept = Vec::new();

    for record in records {
        let (calib_n, calib_mean, calib_sd) = calibration_stats(record);
        let (recon_n, recon_min, recon_max) = reconstruction_range(record);
        let f = if calib_n >= 2 && recon_n >= 1 {
            Some(filter_measure(record)?)
        } else {
            None
        };

        let manual_include = overrides.include.contains(&record.id);
        let manual_exclude = overrides.exclude.contains(&record.id);

        let (decision, reason) = if manual_exclude {
            (FilterDecision::FilteredManual, "manual".to_string())
        } else if manual_include {
            (FilterDecision::Kept, "manual".to_string())
        } else if calib_n <= 1 {
            (
                FilterDecision::FilteredSingleObs,
                "at most one calibration observation".to_string(),
            )
        } else if recon_n == 0 {
            (
                FilterDecision::Kept,
                "no reconstruction observations".to_string(),
            )
        } else {
            let f = f.unwrap();
            if f > threshold {
                let reason = if calib_sd == Some(0.0) {
                    "degenerate calibration".to_string()
                } else {
                    format!("F {f:.3} exceeds threshold {threshold}")
                };
                (FilterDecision::FilteredRange, reason)
            } else {
                (FilterDecision::Kept, String::new())
            }
        };

        if decision.is_kept() {
            kept.push(record.clone());
        }
        rows.push(FilterRow {
            id: record.id.clone(),
            f,
            calib_n,
            calib_mean,
            calib_sd,
            recon_n,
            recon_min,
            recon_max,
            decision,
            reason,
        });
    }

    if kept.is_empty() {
        return Err(Error::Data(
            "no proxies survive filtering; relax the threshold or check the inputs".into(),
        ));
    }

    Ok((
        kept,
        FilterReport {
            threshold,
            rows,
        },
    ))
}
