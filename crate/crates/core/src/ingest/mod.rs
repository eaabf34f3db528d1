//! Input parsing, transformation, standardisation and time alignment.
//!
//! The pipeline works on two kinds of series:
//!
//! * an instrumental hydroclimate index (one value per year, contiguous), and
//! * a network of proxy records (one value per observed year, gaps allowed),
//!   each with a fixed lead/lag relative to the index it responds to.
//!
//! Everything downstream of this module operates on standardised values. The
//! index is z-scored with its instrumental mean and standard deviation (after
//! an optional Box-Cox transform for skewed indices); each proxy is z-scored
//! with its own full-record statistics.

mod boxcox;

pub use boxcox::{fit_boxcox, BoxCoxState, LAMBDA_RANGE, LAMBDA_TOL};

use std::collections::HashMap;
use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum number of instrumental years required to calibrate on.
pub const MIN_INSTRUMENTAL_LEN: usize = 10;
/// Largest admissible proxy lead/lag in years.
pub const MAX_LAG: i32 = 5;

/// Names of the year and value columns in an index CSV file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub year: String,
    pub value: String,
}

impl Default for ColumnSpec {
    fn default() -> Self {
        ColumnSpec {
            year: "year".into(),
            value: "value".into(),
        }
    }
}

/// An annual index series over a contiguous run of years.
///
/// A freshly loaded series is on original units with both `transform` and
/// `standardization` unset; [`apply_boxcox`] and [`standardize`] populate
/// those fields as they map the values.
#[derive(Debug, Clone)]
pub struct HydroSeries {
    pub years: Vec<i32>,
    pub values: Vec<f64>,
    /// Power transform applied to the values, if any.
    pub transform: Option<BoxCoxState>,
    /// `(mean, sd)` used to z-score the values, if standardised.
    pub standardization: Option<(f64, f64)>,
}

impl HydroSeries {
    /// Build a series from parallel year/value vectors, validating shape,
    /// contiguity and minimum length.
    pub fn new(years: Vec<i32>, values: Vec<f64>) -> Result<Self> {
        if years.len() != values.len() {
            return Err(Error::Data("year and value lengths differ".into()));
        }
        if years.len() < MIN_INSTRUMENTAL_LEN {
            return Err(Error::Data(format!(
                "series too short: {} years, need at least {MIN_INSTRUMENTAL_LEN}",
                years.len()
            )));
        }
        let mut idx: Vec<usize> = (0..years.len()).collect();
        idx.sort_by_key(|&i| years[i]);
        let years_sorted: Vec<i32> = idx.iter().map(|&i| years[i]).collect();
        let values_sorted: Vec<f64> = idx.iter().map(|&i| values[i]).collect();
        for w in years_sorted.windows(2) {
            if w[1] == w[0] {
                return Err(Error::Data(format!("duplicate year {} in index series", w[0])));
            }
            if w[1] != w[0] + 1 {
                return Err(Error::Data(format!(
                    "gap in index series between {} and {}",
                    w[0], w[1]
                )));
            }
        }
        if let Some(bad) = values_sorted.iter().find(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite index value {bad}")));
        }
        Ok(HydroSeries {
            years: years_sorted,
            values: values_sorted,
            transform: None,
            standardization: None,
        })
    }

    pub fn len(&self) -> usize {
        self.years.len()
    }

    pub fn is_empty(&self) -> bool {
        self.years.is_empty()
    }

    pub fn start_year(&self) -> i32 {
        self.years[0]
    }

    pub fn end_year(&self) -> i32 {
        *self.years.last().unwrap()
    }

    /// Map a standardised value back to the (possibly transformed) scale.
    pub fn unstandardize(&self, z: f64) -> f64 {
        match self.standardization {
            Some((mean, sd)) => z * sd + mean,
            None => z,
        }
    }

    /// Map a standardised value all the way back to original units.
    pub fn to_original(&self, z: f64) -> f64 {
        let y = self.unstandardize(z);
        match &self.transform {
            Some(t) => t.inverse(y),
            None => y,
        }
    }

    /// Map an original-unit value onto this series' current scale (forward
    /// transform, then z-score) — the inverse of [`Self::to_original`].
    /// Errors if a power transform is recorded and the value is not positive.
    pub fn from_original(&self, raw: f64) -> Result<f64> {
        let y = match &self.transform {
            Some(t) => {
                if !(raw > 0.0) {
                    return Err(Error::Data(format!(
                        "cannot power-transform non-positive value {raw}"
                    )));
                }
                t.forward(raw)
            }
            None => raw,
        };
        Ok(match self.standardization {
            Some((mean, sd)) => (y - mean) / sd,
            None => y,
        })
    }
}

/// Mean and sample standard deviation (n - 1 denominator).
fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Fit a Box-Cox transform to the series and apply it.
///
/// Must be called before [`standardize`]; errors if the series is already
/// transformed or standardised, or contains non-positive values.
pub fn apply_boxcox(series: &HydroSeries) -> Result<HydroSeries> {
    if series.transform.is_some() {
        return Err(Error::Data("series is already transformed".into()));
    }
    if series.standardization.is_some() {
        return Err(Error::Data(
            "Box-Cox must be applied before standardisation".into(),
        ));
    }
    let state = fit_boxcox(&series.values)?;
    Ok(HydroSeries {
        years: series.years.clone(),
        values: series.values.iter().map(|&x| state.forward(x)).collect(),
        transform: Some(state),
        standardization: None,
    })
}

/// Z-score a series with its own mean and sample standard deviation.
///
/// Errors on fewer than two values or zero variance.
pub fn standardize(series: &HydroSeries) -> Result<HydroSeries> {
    if series.standardization.is_some() {
        return Err(Error::Data("series is already standardised".into()));
    }
    if series.len() < 2 {
        return Err(Error::Data("cannot standardise fewer than two values".into()));
    }
    let (mean, sd) = mean_sd(&series.values);
    if sd == 0.0 || !sd.is_finite() {
        return Err(Error::Data("zero variance: cannot standardise".into()));
    }
    Ok(HydroSeries {
        years: series.years.clone(),
        values: series.values.iter().map(|&x| (x - mean) / sd).collect(),
        transform: series.transform,
        standardization: Some((mean, sd)),
    })
}

/// Transform (optionally) and standardise an index series in one step.
pub fn prepare_hydro(series: &HydroSeries, use_boxcox: bool) -> Result<HydroSeries> {
    if use_boxcox {
        standardize(&apply_boxcox(series)?)
    } else {
        standardize(series)
    }
}

/// One proxy observation in original units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProxyObs {
    pub year: i32,
    pub value: f64,
}

/// A proxy record: one dated series from one archive, with a fixed lead/lag
/// (in years) between the proxy observation and the index year it informs.
#[derive(Debug, Clone)]
pub struct ProxyRecord {
    pub id: String,
    pub archive: String,
    pub lag: i32,
    /// Observations sorted by year; gaps are allowed.
    pub obs: Vec<ProxyObs>,
    /// `(mean, sd)` used to z-score the values, if standardised.
    pub standardization: Option<(f64, f64)>,
}

/// Z-score a proxy record with its full-record mean and standard deviation.
pub fn standardize_proxy(record: &ProxyRecord) -> Result<ProxyRecord> {
    if record.standardization.is_some() {
        return Err(Error::Data(format!(
            "proxy {} is already standardised",
            record.id
        )));
    }
    if record.obs.len() < 2 {
        return Err(Error::Data(format!(
            "proxy {} has fewer than two observations",
            record.id
        )));
    }
    let values: Vec<f64> = record.obs.iter().map(|o| o.value).collect();
    let (mean, sd) = mean_sd(&values);
    if sd == 0.0 || !sd.is_finite() {
        return Err(Error::Data(format!(
            "proxy {} has zero variance: cannot standardise",
            record.id
        )));
    }
    Ok(ProxyRecord {
        id: record.id.clone(),
        archive: record.archive.clone(),
        lag: record.lag,
        obs: record
            .obs
            .iter()
            .map(|o| ProxyObs {
                year: o.year,
                value: (o.value - mean) / sd,
            })
            .collect(),
        standardization: Some((mean, sd)),
    })
}

/// Whether an aligned observation falls in the instrumental (calibration)
/// period or before it (reconstruction period).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Calibration,
    Reconstruction,
}

/// A proxy observation resolved onto the reconstruction grid.
#[derive(Debug, Clone, Copy)]
pub struct AlignedObs {
    /// Year the proxy was observed.
    pub year: i32,
    /// Index year the observation informs (`year + lag`).
    pub target_year: i32,
    /// Standardised proxy value.
    pub value: f64,
    pub split: Split,
}

/// A proxy record after lag alignment and calibration/reconstruction tagging.
#[derive(Debug, Clone)]
pub struct AlignedRecord {
    pub id: String,
    pub archive: String,
    pub lag: i32,
    pub obs: Vec<AlignedObs>,
}

impl AlignedRecord {
    pub fn calibration_values(&self) -> Vec<f64> {
        self.obs
            .iter()
            .filter(|o| o.split == Split::Calibration)
            .map(|o| o.value)
            .collect()
    }

    pub fn reconstruction_values(&self) -> Vec<f64> {
        self.obs
            .iter()
            .filter(|o| o.split == Split::Reconstruction)
            .map(|o| o.value)
            .collect()
    }
}

/// A contiguous annual grid of index years.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeGrid {
    start: i32,
    end: i32,
}

impl TimeGrid {
    pub fn new(start: i32, end: i32) -> Result<Self> {
        if start > end {
            return Err(Error::Data(format!("empty time grid: {start}..{end}")));
        }
        Ok(TimeGrid { start, end })
    }

    pub fn start(&self) -> i32 {
        self.start
    }

    pub fn end(&self) -> i32 {
        self.end
    }

    pub fn len(&self) -> usize {
        (self.end - self.start + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Position of `year` on the grid, if covered.
    pub fn index(&self, year: i32) -> Option<usize> {
        if year < self.start || year > self.end {
            None
        } else {
            Some((year - self.start) as usize)
        }
    }

    pub fn year(&self, index: usize) -> i32 {
        self.start + index as i32
    }

    pub fn years(&self) -> impl Iterator<Item = i32> + '_ {
        self.start..=self.end
    }
}

/// Result of aligning a proxy network against an instrumental series.
#[derive(Debug, Clone)]
pub struct Alignment {
    pub records: Vec<AlignedRecord>,
    pub grid: TimeGrid,
    /// Human-readable notes about dropped observations or records.
    pub warnings: Vec<String>,
}

/// Align proxy records to the index years they inform and tag each
/// observation as calibration (inside the instrumental period) or
/// reconstruction (before it).
///
/// Observations whose lag-adjusted year falls after the instrumental end are
/// dropped with a warning: there is no index year for them to inform. The
/// grid runs from the earliest retained lag-adjusted year (or the
/// instrumental start, whichever is earlier) to the instrumental end.
pub fn align(records: &[ProxyRecord], hydro: &HydroSeries) -> Result<Alignment> {
    let instr_start = hydro.start_year();
    let instr_end = hydro.end_year();
    let mut warnings = Vec::new();
    let mut aligned = Vec::new();
    let mut grid_start = instr_start;

    for record in records {
        if record.lag.abs() > MAX_LAG {
            return Err(Error::Data(format!(
                "proxy {}: lag {} outside +/-{MAX_LAG}",
                record.id, record.lag
            )));
        }
        let mut obs = Vec::with_capacity(record.obs.len());
        let mut dropped = 0usize;
        for o in &record.obs {
            let target = o.year + record.lag;
            if target > instr_end {
                dropped += 1;
                continue;
            }
            let split = if target >= instr_start {
                Split::Calibration
            } else {
                Split::Reconstruction
            };
            obs.push(AlignedObs {
                year: o.year,
                target_year: target,
                value: o.value,
                split,
            });
            grid_start = grid_start.min(target);
        }
        if dropped > 0 {
            warnings.push(format!(
                "proxy {}: dropped {dropped} observation(s) past the instrumental end {instr_end}",
                record.id
            ));
        }
        if obs.is_empty() {
            warnings.push(format!(
                "proxy {}: no observations within the grid, record dropped",
                record.id
            ));
            continue;
        }
        aligned.push(AlignedRecord {
            id: record.id.clone(),
            archive: record.archive.clone(),
            lag: record.lag,
            obs,
        });
    }

    for w in &warnings {
        log::warn!("{w}");
    }

    Ok(Alignment {
        records: aligned,
        grid: TimeGrid::new(grid_start, instr_end)?,
        warnings,
    })
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn header_index(headers: &csv::StringRecord, name: &str, path: &Path) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::Malformed {
            path: path.to_path_buf(),
            line: 1,
            msg: format!("missing column '{name}'"),
        })
}

fn record_line(record: &csv::StringRecord) -> usize {
    record.position().map(|p| p.line() as usize).unwrap_or(0)
}

fn parse_cell<T: std::str::FromStr>(
    record: &csv::StringRecord,
    idx: usize,
    what: &str,
    path: &Path,
) -> Result<T> {
    let raw = record.get(idx).unwrap_or("");
    raw.parse().map_err(|_| Error::Malformed {
        path: path.to_path_buf(),
        line: record_line(record),
        msg: format!("cannot parse {what} from '{raw}'"),
    })
}

/// Load an instrumental index series from a CSV file with a header row.
///
/// `cols` names the year and value columns (defaults `year`, `value`).
pub fn load_hydro(path: &Path, cols: &ColumnSpec) -> Result<HydroSeries> {
    let mut reader = csv_reader(path)?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Malformed {
            path: path.to_path_buf(),
            line: 1,
            msg: e.to_string(),
        })?
        .clone();
    let year_idx = header_index(&headers, &cols.year, path)?;
    let value_idx = header_index(&headers, &cols.value, path)?;

    let mut years = Vec::new();
    let mut values = Vec::new();
    for row in reader.records() {
        let record = row.map_err(|e| Error::Malformed {
            path: path.to_path_buf(),
            line: 0,
            msg: e.to_string(),
        })?;
        years.push(parse_cell::<i32>(&record, year_idx, "year", path)?);
        values.push(parse_cell::<f64>(&record, value_idx, "value", path)?);
    }
    HydroSeries::new(years, values)
}

/// Load a proxy network from a long-format CSV file with columns
/// `dataset_id,archive,year,value,lag`.
///
/// Rows are grouped by `dataset_id`; archive and lag must be constant within
/// a record and duplicate years within a record are an error.
pub fn load_proxies(path: &Path) -> Result<Vec<ProxyRecord>> {
    let mut reader = csv_reader(path)?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Malformed {
            path: path.to_path_buf(),
            line: 1,
            msg: e.to_string(),
        })?
        .clone();
    let id_idx = header_index(&headers, "dataset_id", path)?;
    let archive_idx = header_index(&headers, "archive", path)?;
    let year_idx = header_index(&headers, "year", path)?;
    let value_idx = header_index(&headers, "value", path)?;
    let lag_idx = header_index(&headers, "lag", path)?;

    let mut order: Vec<String> = Vec::new();
    let mut by_id: HashMap<String, ProxyRecord> = HashMap::new();

    for row in reader.records() {
        let record = row.map_err(|e| Error::Malformed {
            path: path.to_path_buf(),
            line: 0,
            msg: e.to_string(),
        })?;
        let line = record_line(&record);
        let id = record.get(id_idx).unwrap_or("").to_string();
        if id.is_empty() {
            return Err(Error::Malformed {
                path: path.to_path_buf(),
                line,
                msg: "empty dataset_id".into(),
            });
        }
        let archive = record.get(archive_idx).unwrap_or("").to_string();
        let year: i32 = parse_cell(&record, year_idx, "year", path)?;
        let value: f64 = parse_cell(&record, value_idx, "value", path)?;
        if !value.is_finite() {
            return Err(Error::Malformed {
                path: path.to_path_buf(),
                line,
                msg: format!("non-finite value {value}"),
            });
        }
        let lag: i32 = parse_cell(&record, lag_idx, "lag", path)?;
        if lag.abs() > MAX_LAG {
            return Err(Error::Malformed {
                path: path.to_path_buf(),
                line,
                msg: format!("lag {lag} outside +/-{MAX_LAG}"),
            });
        }

        match by_id.get_mut(&id) {
            None => {
                order.push(id.clone());
                by_id.insert(
                    id.clone(),
                    ProxyRecord {
                        id,
                        archive,
                        lag,
                        obs: vec![ProxyObs { year, value }],
                        standardization: None,
                    },
                );
            }
            Some(existing) => {
                if existing.archive != archive {
                    return Err(Error::Malformed {
                        path: path.to_path_buf(),
                        line,
                        msg: format!(
                            "proxy {id}: archive changes from '{}' to '{archive}'",
                            existing.archive
                        ),
                    });
                }
                if existing.lag != lag {
                    return Err(Error::Malformed {
                        path: path.to_path_buf(),
                        line,
                        msg: format!(
                            "proxy {id}: lag changes from {} to {lag}",
                            existing.lag
                        ),
                    });
                }
                if existing.obs.iter().any(|o| o.year == year) {
                    return Err(Error::Malformed {
                        path: path.to_path_buf(),
                        line,
                        msg: format!("proxy {id}: duplicate observation for year {year}"),
                    });
                }
                existing.obs.push(ProxyObs { year, value });
            }
        }
    }

    let mut records: Vec<ProxyRecord> = order
        .into_iter()
        .map(|id| by_id.remove(&id).unwrap())
        .collect();
    for r in &mut records {
        r.obs.sort_by_key(|o| o.year);
    }
    if records.is_empty() {
        return Err(Error::Data(format!(
            "no proxy records found in {}",
            path.display()
        )));
    }
    Ok(records)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::io::BufWriter<File>>> {
    let file = File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(csv::Writer::from_writer(std::io::BufWriter::new(file)))
}

fn csv_io_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e),
    }
}

/// Write a series in the shape [`load_hydro`] reads (`year,value`, stored
/// scale).
pub fn write_hydro_csv(path: &Path, series: &HydroSeries) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = csv_io_err(path);
    w.write_record(["year", "value"]).map_err(&err)?;
    for (year, value) in series.years.iter().zip(&series.values) {
        w.write_record([year.to_string(), value.to_string()])
            .map_err(&err)?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(())
}

/// Write a proxy network in the long shape [`load_proxies`] reads
/// (`dataset_id,archive,year,value,lag`).
pub fn write_proxies_csv(path: &Path, records: &[ProxyRecord]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = csv_io_err(path);
    w.write_record(["dataset_id", "archive", "year", "value", "lag"])
        .map_err(&err)?;
    for r in records {
        for o in &r.obs {
            w.write_record([
                r.id.clone(),
                r.archive.clone(),
                o.year.to_string(),
                o.value.to_string(),
                r.lag.to_string(),
            ])
            .map_err(&err)?;
        }
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(())
}

/// Write `(year, value)` pairs as `year,value` — used for simulation truth
/// series and other plain annual tables.
pub fn write_year_values_csv(path: &Path, rows: impl Iterator<Item = (i32, f64)>) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = csv_io_err(path);
    w.write_record(["year", "value"]).map_err(&err)?;
    for (year, value) in rows {
        w.write_record([year.to_string(), value.to_string()])
            .map_err(&err)?;
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
    use approx::assert_abs_diff_eq;

    fn series(start: i32, values: Vec<f64>) -> HydroSeries {
        let years = (start..start + values.len() as i32).collect();
        HydroSeries::new(years, values).unwrap()
    }

    fn proxy(id: &str, lag: i32, obs: &[(i32, f64)]) -> ProxyRecord {
        ProxyRecord {
            id: id.into(),
            archive: "coral".into(),
            lag,
            obs: obs.iter().map(|&(year, value)| ProxyObs { year, value }).collect(),
            standardization: None,
        }
    }

    #[test]
    fn standardize_small_example() {
        let s = HydroSeries {
            years: vec![1, 2, 3],
            values: vec![10.0, 12.0, 14.0],
            transform: None,
            standardization: None,
        };
        let z = standardize(&s).unwrap();
        assert_eq!(z.standardization, Some((12.0, 2.0)));
        assert_abs_diff_eq!(z.values[0], -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(z.values[1], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(z.values[2], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn standardize_rejects_zero_variance() {
        let s = HydroSeries {
            years: vec![1, 2, 3],
            values: vec![5.0, 5.0, 5.0],
            transform: None,
            standardization: None,
        };
        assert!(matches!(standardize(&s), Err(Error::Data(_))));
    }

    #[test]
    fn unstandardize_round_trips() {
        let s = series(1900, (0..20).map(|i| 100.0 + 3.0 * i as f64).collect());
        let z = standardize(&s).unwrap();
        for (orig, std_v) in s.values.iter().zip(&z.values) {
            assert_abs_diff_eq!(z.unstandardize(*std_v), *orig, epsilon = 1e-9);
        }
    }

    #[test]
    fn to_original_inverts_boxcox_and_standardization() {
        let s = series(1900, (0..30).map(|i| 200.0 + 25.0 * (i as f64).sin().abs() + i as f64).collect());
        let prepared = prepare_hydro(&s, true).unwrap();
        for (orig, z) in s.values.iter().zip(&prepared.values) {
            assert_abs_diff_eq!(prepared.to_original(*z), *orig, epsilon = 1e-6);
        }
    }

    #[test]
    fn series_too_short_is_rejected() {
        let err = HydroSeries::new(vec![2000], vec![1.0]).unwrap_err();
        match err {
            Error::Data(msg) => assert!(msg.contains("too short"), "{msg}"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn gap_and_duplicate_years_are_rejected() {
        let years: Vec<i32> = (1900..1910).collect();
        let mut with_gap = years.clone();
        with_gap[9] = 1911;
        assert!(HydroSeries::new(with_gap, vec![1.0; 10]).is_err());
        let mut with_dup = years;
        with_dup[9] = 1908;
        assert!(HydroSeries::new(with_dup, vec![1.0; 10]).is_err());
    }

    #[test]
    fn proxy_standardization_uses_full_record() {
        let p = proxy("p1", 0, &[(1, 2.0), (2, 4.0), (3, 6.0), (4, 8.0)]);
        let z = standardize_proxy(&p).unwrap();
        let (mean, sd) = z.standardization.unwrap();
        assert_abs_diff_eq!(mean, 5.0, epsilon = 1e-12);
        // var = ((9+1+1+9)/3) = 20/3
        assert_abs_diff_eq!(sd, (20.0f64 / 3.0).sqrt(), epsilon = 1e-12);
        let back: Vec<f64> = z.obs.iter().map(|o| o.value * sd + mean).collect();
        for (a, b) in back.iter().zip(p.obs.iter().map(|o| o.value)) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-9);
        }
    }

    #[test]
    fn align_maps_lags_and_tags_splits() {
        let hydro = series(1900, vec![1.0; 20]); // 1900..=1919
        // Observation year 1902 with lag -1 informs index year 1901.
        let p1 = proxy("a", -1, &[(1880, 0.1), (1902, 0.2)]);
        // Lag +2: observation 1898 informs 1900 (calibration).
        let p2 = proxy("b", 2, &[(1890, 0.3), (1898, 0.4)]);
        let alignment = align(&[p1, p2], &hydro).unwrap();
        assert_eq!(alignment.grid.start(), 1879);
        assert_eq!(alignment.grid.end(), 1919);

        let a = &alignment.records[0];
        assert_eq!(a.obs[0].target_year, 1879);
        assert_eq!(a.obs[0].split, Split::Reconstruction);
        assert_eq!(a.obs[1].target_year, 1901);
        assert_eq!(a.obs[1].split, Split::Calibration);

        let b = &alignment.records[1];
        assert_eq!(b.obs[0].target_year, 1892);
        assert_eq!(b.obs[0].split, Split::Reconstruction);
        assert_eq!(b.obs[1].target_year, 1900);
        assert_eq!(b.obs[1].split, Split::Calibration);
    }

    #[test]
    fn align_drops_observations_past_instrumental_end() {
        let hydro = series(1900, vec![1.0; 10]); // ends 1909
        let p = proxy("a", 3, &[(1905, 0.1), (1908, 0.2)]);
        // 1908 + 3 = 1911 > 1909: dropped.
        let alignment = align(&[p], &hydro).unwrap();
        assert_eq!(alignment.records[0].obs.len(), 1);
        assert_eq!(alignment.warnings.len(), 1);
        assert!(alignment.warnings[0].contains("dropped 1"));
    }

    #[test]
    fn align_drops_empty_records_entirely() {
        let hydro = series(1900, vec![1.0; 10]);
        let keepable = proxy("keep", 0, &[(1901, 0.5)]);
        let hopeless = proxy("gone", 5, &[(1910, 0.1)]);
        let alignment = align(&[keepable, hopeless], &hydro).unwrap();
        assert_eq!(alignment.records.len(), 1);
        assert_eq!(alignment.records[0].id, "keep");
        assert!(alignment.warnings.iter().any(|w| w.contains("gone")));
    }

    #[test]
    fn grid_indexing_round_trips() {
        let grid = TimeGrid::new(1850, 1900).unwrap();
        assert_eq!(grid.len(), 51);
        assert_eq!(grid.index(1850), Some(0));
        assert_eq!(grid.index(1900), Some(50));
        assert_eq!(grid.index(1849), None);
        assert_eq!(grid.index(1901), None);
        for idx in 0..grid.len() {
            assert_eq!(grid.index(grid.year(idx)), Some(idx));
        }
    }

    #[test]
    fn load_hydro_parses_and_validates() {
        let dir = std::env::temp_dir().join("hydrorecon_ingest_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("hydro.csv");
        let mut body = String::from("year,value\n");
        for (i, year) in (1900..1915).enumerate() {
            body.push_str(&format!("{year},{}\n", 100.0 + i as f64));
        }
        std::fs::write(&path, &body).unwrap();
        let s = load_hydro(&path, &ColumnSpec::default()).unwrap();
        assert_eq!(s.len(), 15);
        assert_eq!(s.start_year(), 1900);
        assert_abs_diff_eq!(s.values[3], 103.0, epsilon = 1e-12);

        let bad = dir.join("bad.csv");
        std::fs::write(&bad, "year,value\n1900,1.0\n1901,oops\n").unwrap();
        match load_hydro(&bad, &ColumnSpec::default()).unwrap_err() {
            Error::Malformed { line, msg, .. } => {
                assert_eq!(line, 3);
                assert!(msg.contains("oops"));
            }
            other => panic!("unexpected error {other:?}"),
        }

        let missing = dir.join("missing.csv");
        std::fs::write(&missing, "anno,value\n1900,1.0\n").unwrap();
        assert!(matches!(
            load_hydro(&missing, &ColumnSpec::default()),
            Err(Error::Malformed { .. })
        ));
    }

    #[test]
    fn csv_writers_round_trip_through_the_loaders() {
        let dir = std::env::temp_dir().join(format!("hydrorecon_rt_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();

        let s = series(1950, (0..12).map(|i| 50.0 + (i as f64) * 1.5).collect());
        let hpath = dir.join("hydro_rt.csv");
        write_hydro_csv(&hpath, &s).unwrap();
        let back = load_hydro(&hpath, &ColumnSpec::default()).unwrap();
        assert_eq!(back.years, s.years);
        assert_eq!(back.values, s.values);

        let proxies = vec![
            proxy("a", -1, &[(1900, 0.25), (1901, -1.5)]),
            proxy("b", 2, &[(1890, 3.125)]),
        ];
        let ppath = dir.join("proxies_rt.csv");
        write_proxies_csv(&ppath, &proxies).unwrap();
        let back = load_proxies(&ppath).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].id, "a");
        assert_eq!(back[0].lag, -1);
        assert_eq!(back[0].obs[1].value, -1.5);
        assert_eq!(back[1].obs[0].year, 1890);

        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn load_proxies_groups_and_validates() {
        let dir = std::env::temp_dir().join("hydrorecon_ingest_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("proxies.csv");
        std::fs::write(
            &path,
            "dataset_id,archive,year,value,lag\n\
             cA,coral,1890,1.2,-1\n\
             cA,coral,1891,1.4,-1\n\
             tB,tree,1700,0.9,0\n\
             cA,coral,1893,1.1,-1\n",
        )
        .unwrap();
        let records = load_proxies(&path).unwrap();
        assert_eq!(records.len(), 2);
        assert_eq!(records[0].id, "cA");
        assert_eq!(records[0].obs.len(), 3);
        assert_eq!(records[0].obs[2].year, 1893);
        assert_eq!(records[1].id, "tB");

        let dup = dir.join("dup.csv");
        std::fs::write(
            &dup,
            "dataset_id,archive,year,value,lag\ncA,coral,1890,1.2,0\ncA,coral,1890,1.3,0\n",
        )
        .unwrap();
        match load_proxies(&dup).unwrap_err() {
            Error::Malformed { msg, .. } => assert!(msg.contains("duplicate")),
            other => panic!("unexpected error {other:?}"),
        }

        let lag_flip = dir.join("lagflip.csv");
        std::fs::write(
            &lag_flip,
            "dataset_id,archive,year,value,lag\ncA,coral,1890,1.2,0\ncA,coral,1891,1.3,1\n",
        )
        .unwrap();
        assert!(load_proxies(&lag_flip).is_err());

        let big_lag = dir.join("biglag.csv");
        std::fs::write(
            &big_lag,
            "dataset_id,archive,year,value,lag\ncA,coral,1890,1.2,6\n",
        )
        .unwrap();
        assert!(load_proxies(&big_lag).is_err());
    }
}
