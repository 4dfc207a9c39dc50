//! Observation matrix, CSV ingestion and the second-order sample statistics
//! everything else is built from.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

/// `n x p` observations, row `t` is `y_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesMatrix {
    values: DMatrix<f64>,
    names: Vec<String>,
}

impl TimeSeriesMatrix {
    pub fn new(values: DMatrix<f64>, names: Vec<String>) -> Result<Self> {
        let (n, p) = values.shape();
        if p == 0 {
            return Err(Error::InvalidInput("series has no columns".into()));
        }
        if n < 2 {
            return Err(Error::InvalidInput(format!("need at least 2 observations, got {n}")));
        }
        if names.len() != p {
            return Err(Error::InvalidInput(format!("{} names for {p} columns", names.len())));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            // column-major storage
            return Err(Error::InvalidInput(format!(
                "non-finite value at row {}, column {}",
                pos % n + 1,
                pos / n + 1
            )));
        }
        Ok(Self { values, names })
    }

    /// Columns named `c1..cp`.
    pub fn from_values(values: DMatrix<f64>) -> Result<Self> {
        let names = default_names(values.ncols());
        Self::new(values, names)
    }

    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let p = columns.len();
        let n = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != n) {
            return Err(Error::InvalidInput("columns differ in length".into()));
        }
        Self::from_values(DMatrix::from_fn(n, p, |t, j| columns[j][t]))
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn p(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values.column(j).iter().copied().collect()
    }

    pub fn column_means(&self) -> DVector<f64> {
        self.values.row_mean().transpose()
    }

    /// Observations with the column means subtracted.
    pub fn centered(&self) -> DMatrix<f64> {
        let means = self.values.row_mean();
        let mut c = self.values.clone();
        for mut row in c.row_iter_mut() {
            row -= &means;
        }
        c
    }

    /// Rows `start..end` as a new series with the same names.
    pub fn rows(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.n() {
            return Err(Error::range("row window", format!("{start}..{end}"), format!("within 0..{}", self.n())));
        }
        Self::new(self.values.rows(start, end - start).into_owned(), self.names.clone())
    }

    /// `y_t - y_{t-lag}` for `t = lag..n`.
    pub fn seasonal_difference(&self, lag: usize) -> Result<Self> {
        if lag == 0 || lag + 2 > self.n() {
            return Err(Error::range("seasonal lag", lag, format!("1..={}", self.n().saturating_sub(2))));
        }
        let n = self.n() - lag;
        let d = self.values.rows(lag, n) - self.values.rows(0, n);
        Self::new(d, self.names.clone())
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Parse(e.to_string());
        w.write_record(&self.names).map_err(io)?;
        for row in self.values.row_iter() {
            w.write_record(row.iter().map(|v| v.to_string())).map_err(io)?;
        }
        w.flush().map_err(|e| Error::Parse(e.to_string()))
    }
}

pub(crate) fn default_names(p: usize) -> Vec<String> {
    (1..=p).map(|j| format!("c{j}")).collect()
}

/// Reads a comma-separated numeric table, rows in time order.
pub fn load_csv(path: impl AsRef<Path>, has_header: bool) -> Result<TimeSeriesMatrix> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_csv(file, has_header)
}

pub fn parse_csv<R: Read>(input: R, has_header: bool) -> Result<TimeSeriesMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);

    let mut names: Option<Vec<String>> = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width: Option<usize> = None;
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 1;
        let record = record.map_err(|e| Error::Parse(format!("line {line}: {e}")))?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        if has_header && names.is_none() {
            names = Some(record.iter().map(str::to_string).collect());
            width = Some(record.len());
            continue;
        }
        match width {
            Some(w) if w != record.len() => {
                return Err(Error::Parse(format!(
                    "line {line}: ragged row with {} fields, expected {w}",
                    record.len()
                )))
            }
            None => width = Some(record.len()),
            _ => {}
        }
        let row = record
            .iter()
            .enumerate()
            .map(|(col, field)| {
                field
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Parse(format!("line {line}, column {}: not a number: {field:?}", col + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }

    if rows.is_empty() {
        return Err(Error::Parse("no rows".into()));
    }
    if rows.len() < 2 {
        return Err(Error::Parse(format!("need at least 2 rows, got {}", rows.len())));
    }
    let p = width.unwrap_or(0);
    let values = DMatrix::from_fn(rows.len(), p, |t, j| rows[t][j]);
    let names = names.unwrap_or_else(|| default_names(p));
    TimeSeriesMatrix::new(values, names).map_err(|e| Error::Parse(e.to_string()))
}

/// Sample autocovariance at one lag.
#[derive(Debug, Clone, PartialEq)]
pub struct LaggedCovariance {
    pub lag: usize,
    pub matrix: DMatrix<f64>,
}

pub(crate) fn autocov_of_centered(c: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let n = c.nrows();
    let lead = c.rows(k, n - k);
    let lagged = c.rows(0, n - k);
    lead.transpose() * lagged / n as f64
}

/// `(1/n) sum_{t=1}^{n-k} (y_{t+k} - ybar)(y_t - ybar)'`; the divisor is `n`
/// at every lag.
pub fn sample_autocov(y: &TimeSeriesMatrix, k: usize) -> Result<LaggedCovariance> {
    if k >= y.n() {
        return Err(Error::range("lag", k, format!("< n = {}", y.n())));
    }
    let mut matrix = autocov_of_centered(&y.centered(), k);
    if k == 0 {
        matrix = (&matrix + matrix.transpose()) * 0.5;
    }
    Ok(LaggedCovariance { lag: k, matrix })
}

/// Centers the data and rotates it by `Sigma(0)^{-1/2}` so the sample
/// covariance becomes the identity. Returns the standardized series and the
/// symmetric whitener.
pub fn standardize(y: &TimeSeriesMatrix) -> Result<(TimeSeriesMatrix, DMatrix<f64>)> {
    let cov = sample_autocov(y, 0)?;
    let whitener = linalg::inv_sqrt(&cov.matrix)?;
    let z = y.centered() * &whitener;
    Ok((TimeSeriesMatrix::new(z, y.names.clone())?, whitener))
}

/// Cached centered columns for repeated cross-correlation queries.
pub(crate) struct CrossCorrelator {
    centered: Vec<Vec<f64>>,
    norms: Vec<f64>,
}

impl CrossCorrelator {
    pub(crate) fn new(z: &TimeSeriesMatrix) -> Self {
        let c = z.centered();
        let centered: Vec<Vec<f64>> = c.column_iter().map(|col| col.iter().copied().collect()).collect();
        let norms = centered
            .iter()
            .map(|col| col.iter().map(|v| v * v).sum::<f64>())
            .collect();
        Self { centered, norms }
    }

    pub(crate) fn n(&self) -> usize {
        self.centered.first().map_or(0, Vec::len)
    }

    pub(crate) fn corr(&self, i: usize, j: usize, h: isize) -> Result<f64> {
        let n = self.n();
        if h.unsigned_abs() >= n {
            return Err(Error::range("lag", h, format!("|h| < n = {n}")));
        }
        let scale = self.norms[i] * self.norms[j];
        // a column that centers to (numerically) zero has no defined correlation
        let tiny = |k: usize| self.norms[k] <= f64::EPSILON * f64::EPSILON * n as f64;
        if tiny(i) || tiny(j) {
            return Err(Error::UndefinedCorrelation(format!(
                "column {} has zero variance",
                if tiny(i) { i + 1 } else { j + 1 }
            )));
        }
        let (zi, zj) = (&self.centered[i], &self.centered[j]);
        let s = h.unsigned_abs();
        let num: f64 = if h >= 0 {
            zi[s..].iter().zip(&zj[..n - s]).map(|(a, b)| a * b).sum()
        } else {
            zi[..n - s].iter().zip(&zj[s..]).map(|(a, b)| a * b).sum()
        };
        Ok((num / scale.sqrt()).clamp(-1.0, 1.0))
    }
}

/// Sample cross correlation between `z_{i,t+h}` and `z_{j,t}`, normalized by
/// the full-sample sums of squares.
pub fn cross_corr(z: &TimeSeriesMatrix, i: usize, j: usize, h: isize) -> Result<f64> {
    if i >= z.p() || j >= z.p() {
        return Err(Error::range("column", i.max(j), format!("< p = {}", z.p())));
    }
    CrossCorrelator::new(z).corr(i, j, h)
}
