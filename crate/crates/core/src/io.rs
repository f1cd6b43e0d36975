//! File formats: series CSV, plain tables, JSON and digests.
//!
//! Floats are written as `{:.16e}` (17 significant digits), which round-trips
//! every finite `f64` exactly.

use std::fs;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::ensemble::EnsembleSeries;
use crate::error::{Error, Result};
use crate::observables::Observable;
use crate::stats::RunningStats;

pub const SERIES_HEADER: [&str; 5] = ["time", "observable", "mean", "stderr", "count"];

/// Lossless float rendering used in every CSV.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn parse_f64(field: &str, what: &'static str) -> Result<f64> {
    field
        .trim()
        .parse()
        .map_err(|_| Error::format(what, format!("'{field}' is not a number")))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Writes through a sibling temporary file and a rename, so readers never see
/// a half-written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn read_to_string(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(Error::MissingInput(path.to_path_buf()));
    }
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn to_json_bytes(value: &impl Serialize) -> Result<Vec<u8>> {
    let mut bytes =
        serde_json::to_vec_pretty(value).map_err(|e| Error::format("json", e.to_string()))?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Renders a table with a header row; fields must not need quoting.
pub fn table_to_csv(header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)
        .map_err(|e| Error::format("csv", e.to_string()))?;
    for row in rows {
        w.write_record(row)
            .map_err(|e| Error::format("csv", e.to_string()))?;
    }
    w.into_inner()
        .map_err(|e| Error::format("csv", e.to_string()))
}

/// A parsed CSV file with named columns.
#[derive(Debug, Clone)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn parse(text: &str, what: &'static str) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(text.as_bytes());
        let header = r
            .headers()
            .map_err(|e| Error::format(what, e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| Error::format(what, e.to_string()))?;
            rows.push(rec.iter().map(str::to_string).collect());
        }
        Ok(Self { header, rows })
    }

    pub fn read(path: &Path, what: &'static str) -> Result<Self> {
        Self::parse(&read_to_string(path)?, what)
    }

    /// Index of a required column.
    pub fn column(&self, name: &str, what: &'static str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::format(what, format!("missing column '{name}'")))
    }
}

/// Series CSV: one row per (record time, observable), times outermost.
pub fn series_to_csv(series: &EnsembleSeries) -> Result<Vec<u8>> {
    let mut rows = Vec::with_capacity(series.record_times.len() * series.observables.len());
    for (k, &t) in series.record_times.iter().enumerate() {
        for (o, obs) in series.observables.iter().enumerate() {
            let s = &series.stats[o][k];
            rows.push(vec![
                fmt_f64(t),
                obs.name().to_string(),
                fmt_f64(s.mean),
                s.stderr().map(fmt_f64).unwrap_or_default(),
                s.count.to_string(),
            ]);
        }
    }
    table_to_csv(&SERIES_HEADER, &rows)
}

/// Parses a series CSV back into ensemble statistics.
///
/// The fingerprint and floored count are not part of the file and come back empty.
pub fn series_from_csv(text: &str) -> Result<EnsembleSeries> {
    const WHAT: &str = "series csv";
    let table = Table::parse(text, WHAT)?;
    if table.header != SERIES_HEADER {
        return Err(Error::format(
            WHAT,
            format!("header must be {}", SERIES_HEADER.join(",")),
        ));
    }
    let mut times: Vec<f64> = Vec::new();
    let mut observables: Vec<Observable> = Vec::new();
    let mut cells: Vec<(usize, Observable, RunningStats)> = Vec::new();
    for row in &table.rows {
        let t = parse_f64(&row[0], WHAT)?;
        let obs: Observable = row[1]
            .parse()
            .map_err(|_| Error::format(WHAT, format!("unknown observable '{}'", row[1])))?;
        let mean = parse_f64(&row[2], WHAT)?;
        let stderr = if row[3].trim().is_empty() {
            None
        } else {
            Some(parse_f64(&row[3], WHAT)?)
        };
        let count: u64 = row[4]
            .trim()
            .parse()
            .map_err(|_| Error::format(WHAT, format!("bad count '{}'", row[4])))?;
        if times.last() != Some(&t) {
            if times.last().is_some_and(|&last| !(t > last)) {
                return Err(Error::format(WHAT, "times must be strictly increasing"));
            }
            times.push(t);
        }
        if times.len() == 1 {
            if observables.contains(&obs) {
                return Err(Error::format(WHAT, format!("duplicate observable '{obs}'")));
            }
            observables.push(obs);
        }
        cells.push((
            times.len() - 1,
            obs,
            RunningStats::from_summary(mean, stderr, count),
        ));
    }
    if times.is_empty() {
        return Err(Error::format(WHAT, "no rows"));
    }
    if cells.len() != times.len() * observables.len() {
        return Err(Error::format(
            WHAT,
            "every time must list the same observables",
        ));
    }
    let mut stats = vec![vec![RunningStats::new(); times.len()]; observables.len()];
    for (i, (k, obs, s)) in cells.into_iter().enumerate() {
        let o = i % observables.len();
        if observables[o] != obs {
            return Err(Error::format(
                WHAT,
                "observables must appear in the same order at every time",
            ));
        }
        stats[o][k] = s;
    }
    Ok(EnsembleSeries {
        record_times: times,
        observables,
        stats,
        params_fingerprint: String::new(),
        floored_total: 0,
    })
}

pub fn read_series(path: &Path) -> Result<EnsembleSeries> {
    series_from_csv(&read_to_string(path)?)
}
