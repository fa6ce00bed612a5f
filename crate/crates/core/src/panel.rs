//! The `p x T` panel of per-period excess returns and its CSV ingestion.
//!
//! CSV layout: a header row whose first cell names the time column and whose
//! remaining cells are asset ids, then one row per period with the timestamp
//! followed by one decimal excess return per asset. Lines starting with `#`
//! are treated as comments.

use std::io::Read;
use std::path::{Path, PathBuf};

use chrono::{NaiveDate, NaiveDateTime};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_ASSETS: usize = 2;
pub const MIN_PERIODS: usize = 4;

/// What ingestion does with an asset whose column has a missing cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingPolicy {
    /// Reject the file, reporting the first incomplete line.
    #[default]
    Reject,
    /// Drop every asset that is missing at least one observation.
    DropAssets,
}

/// Excess returns, one row per asset and one column per period.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPanel {
    returns: DMatrix<f64>,
    asset_ids: Vec<String>,
    time_index: Vec<String>,
}

/// Sort key used to check that the time index is strictly increasing.
#[derive(Debug, Clone, PartialEq, PartialOrd)]
enum TimeKey {
    Int(i64),
    DateTime(NaiveDateTime),
}

fn parse_time_key(label: &str) -> Option<TimeKey> {
    let s = label.trim();
    if let Ok(i) = s.parse::<i64>() {
        return Some(TimeKey::Int(i));
    }
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return d.and_hms_opt(0, 0, 0).map(TimeKey::DateTime);
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S%.f"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(TimeKey::DateTime(dt));
        }
    }
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y%m%d") {
        return d.and_hms_opt(0, 0, 0).map(TimeKey::DateTime);
    }
    None
}

/// Index of the first label that does not strictly increase, if any.
fn first_unordered(labels: &[String]) -> std::result::Result<Option<usize>, String> {
    let keys: Vec<TimeKey> = labels
        .iter()
        .map(|l| parse_time_key(l).ok_or_else(|| format!("unrecognized timestamp {l:?}")))
        .collect::<std::result::Result<_, _>>()?;
    for i in 1..keys.len() {
        let ordered = match (&keys[i - 1], &keys[i]) {
            (TimeKey::Int(a), TimeKey::Int(b)) => a < b,
            (TimeKey::DateTime(a), TimeKey::DateTime(b)) => a < b,
            _ => return Err("time index mixes integer and calendar timestamps".into()),
        };
        if !ordered {
            return Ok(Some(i));
        }
    }
    Ok(None)
}

impl ReturnPanel {
    /// Validate and wrap a return matrix.
    pub fn new(returns: DMatrix<f64>, asset_ids: Vec<String>, time_index: Vec<String>) -> Result<Self> {
        let (p, t) = returns.shape();
        if p < MIN_ASSETS {
            return Err(Error::InvalidArgument(format!("panel needs at least {MIN_ASSETS} assets, got {p}")));
        }
        if t < MIN_PERIODS {
            return Err(Error::InvalidArgument(format!("panel needs at least {MIN_PERIODS} periods, got {t}")));
        }
        if asset_ids.len() != p {
            return Err(Error::dims("asset ids", p, asset_ids.len()));
        }
        if time_index.len() != t {
            return Err(Error::dims("time index", t, time_index.len()));
        }
        if returns.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("return panel"));
        }
        match first_unordered(&time_index) {
            Ok(None) => {}
            Ok(Some(i)) => {
                return Err(Error::InvalidArgument(format!(
                    "time index not strictly increasing at position {i} ({:?} after {:?})",
                    time_index[i],
                    time_index[i - 1]
                )))
            }
            Err(msg) => return Err(Error::InvalidArgument(msg)),
        }
        Ok(Self {
            returns,
            asset_ids,
            time_index,
        })
    }

    /// Panel with generated ids `A1..Ap` and integer periods `1..T`.
    pub fn from_matrix(returns: DMatrix<f64>) -> Result<Self> {
        let ids = (1..=returns.nrows()).map(|i| format!("A{i}")).collect();
        let times = (1..=returns.ncols()).map(|t| t.to_string()).collect();
        Self::new(returns, ids, times)
    }

    pub fn returns(&self) -> &DMatrix<f64> {
        &self.returns
    }

    pub fn asset_ids(&self) -> &[String] {
        &self.asset_ids
    }

    pub fn time_index(&self) -> &[String] {
        &self.time_index
    }

    pub fn n_assets(&self) -> usize {
        self.returns.nrows()
    }

    pub fn n_periods(&self) -> usize {
        self.returns.ncols()
    }

    /// Sub-panel holding columns `start..end`.
    pub fn window(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.n_periods() {
            return Err(Error::InvalidArgument(format!(
                "window {start}..{end} outside panel of {} periods",
                self.n_periods()
            )));
        }
        Self::new(
            self.returns.columns(start, end - start).into_owned(),
            self.asset_ids.clone(),
            self.time_index[start..end].to_vec(),
        )
    }

    pub fn read_csv(path: impl AsRef<Path>, policy: MissingPolicy) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(file, path, policy)
    }

    /// Parse CSV from any reader; `origin` only labels error messages.
    pub fn from_csv_reader<R: Read>(reader: R, origin: &Path, policy: MissingPolicy) -> Result<Self> {
        let data_err = |line: usize, message: String| Error::Data {
            path: PathBuf::from(origin),
            line,
            message,
        };
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .comment(Some(b'#'))
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        let header_line = headers.position().map_or(1, |p| p.line() as usize);
        if headers.len() < 1 + MIN_ASSETS {
            return Err(data_err(
                header_line,
                format!("header needs a time column and at least {MIN_ASSETS} asset columns"),
            ));
        }
        let asset_ids: Vec<String> = headers.iter().skip(1).map(str::to_owned).collect();
        let p = asset_ids.len();
        for (i, id) in asset_ids.iter().enumerate() {
            if id.is_empty() {
                return Err(data_err(header_line, format!("empty asset id in column {}", i + 2)));
            }
            if asset_ids[..i].contains(id) {
                return Err(data_err(header_line, format!("duplicate asset id {id:?}")));
            }
        }

        let mut times = Vec::new();
        let mut rows: Vec<Vec<Option<f64>>> = Vec::new();
        let mut lines = Vec::new();
        for record in rdr.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line() as usize);
            if record.len() != p + 1 {
                return Err(data_err(line, format!("expected {} cells, found {}", p + 1, record.len())));
            }
            let stamp = record[0].to_owned();
            if stamp.is_empty() {
                return Err(data_err(line, "missing timestamp".into()));
            }
            let mut row = Vec::with_capacity(p);
            for (j, cell) in record.iter().skip(1).enumerate() {
                if cell.is_empty() || cell.eq_ignore_ascii_case("na") || cell.eq_ignore_ascii_case("nan") {
                    if policy == MissingPolicy::Reject {
                        return Err(data_err(line, format!("missing value for asset {:?}", asset_ids[j])));
                    }
                    row.push(None);
                } else {
                    let v: f64 = cell
                        .parse()
                        .map_err(|_| data_err(line, format!("cannot parse {cell:?} for asset {:?}", asset_ids[j])))?;
                    if !v.is_finite() {
                        return Err(data_err(line, format!("non-finite value for asset {:?}", asset_ids[j])));
                    }
                    row.push(Some(v));
                }
            }
            times.push(stamp);
            rows.push(row);
            lines.push(line);
        }

        if let Ok(Some(i)) = first_unordered(&times) {
            return Err(data_err(lines[i], format!("timestamp {:?} does not increase", times[i])));
        }
        if let Err(msg) = first_unordered(&times) {
            return Err(data_err(lines.first().copied().unwrap_or(header_line), msg));
        }

        let keep: Vec<usize> = (0..p).filter(|&j| rows.iter().all(|r| r[j].is_some())).collect();
        if keep.len() < p {
            tracing::info!(dropped = p - keep.len(), "dropping assets with missing observations");
        }
        let t = rows.len();
        let mut returns = DMatrix::zeros(keep.len(), t);
        for (col, row) in rows.iter().enumerate() {
            for (i, &j) in keep.iter().enumerate() {
                returns[(i, col)] = row[j].expect("kept assets are complete");
            }
        }
        let ids = keep.iter().map(|&j| asset_ids[j].clone()).collect();
        Self::new(returns, ids, times).map_err(|e| match e {
            Error::InvalidArgument(msg) => data_err(header_line, msg),
            other => other,
        })
    }

    /// Write in the same layout `from_csv_reader` accepts. Values use the
    /// shortest representation that parses back to the identical `f64`.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["time".to_owned()];
        header.extend(self.asset_ids.iter().cloned());
        w.write_record(&header)?;
        for t in 0..self.n_periods() {
            let mut rec = vec![self.time_index[t].clone()];
            rec.extend((0..self.n_assets()).map(|i| self.returns[(i, t)].to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}
