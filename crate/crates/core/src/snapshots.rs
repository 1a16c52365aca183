//! Snapshot matrices, time-shift pair streams, amplitude-proportional noise,
//! train/test splitting and the CSV interchange format.
//!
//! A snapshot matrix stores one state vector per column. Pairs are formed by
//! shifting the series one column: `x_k` is column `k`, `y_k` is column `k + 1`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use faer::{ColRef, Mat, MatRef};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense real state history; entry `(i, k)` is state component `i` at time index `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotMatrix {
    values: Mat<f64>,
    dt: f64,
}

impl SnapshotMatrix {
    /// Wraps `values`, rejecting empty shapes, non-finite entries and a non-positive `dt`.
    pub fn new(values: Mat<f64>, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "dt must be positive and finite, got {dt}"
            )));
        }
        if values.nrows() == 0 {
            return Err(Error::shape("n_state >= 1", "0 rows"));
        }
        for j in 0..values.ncols() {
            for i in 0..values.nrows() {
                if !values[(i, j)].is_finite() {
                    return Err(Error::NonFinite { row: i, col: j });
                }
            }
        }
        Ok(Self { values, dt })
    }

    /// Builds a series from a list of equally sized state columns.
    pub fn from_columns(columns: &[Vec<f64>], dt: f64) -> Result<Self> {
        let n = columns.first().map_or(0, Vec::len);
        if let Some(bad) = columns.iter().find(|c| c.len() != n) {
            return Err(Error::shape(format!("columns of length {n}"), format!("length {}", bad.len())));
        }
        Self::new(Mat::from_fn(n, columns.len(), |i, j| columns[j][i]), dt)
    }

    pub fn n_state(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_time(&self) -> usize {
        self.values.ncols()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn values(&self) -> MatRef<'_, f64> {
        self.values.as_ref()
    }

    pub fn into_values(self) -> Mat<f64> {
        self.values
    }

    pub fn column(&self, k: usize) -> ColRef<'_, f64> {
        self.values.col(k)
    }

    pub fn column_vec(&self, k: usize) -> Vec<f64> {
        self.values.col(k).iter().copied().collect()
    }

    /// Copy of columns `[start, end)`.
    pub fn columns(&self, start: usize, end: usize) -> SnapshotMatrix {
        let values = self.values.subcols(start, end - start).to_owned();
        SnapshotMatrix { values, dt: self.dt }
    }

    /// Appends one state column.
    pub fn push_column(&mut self, column: &[f64]) -> Result<()> {
        if column.len() != self.n_state() {
            return Err(Error::shape(
                format!("column of length {}", self.n_state()),
                format!("length {}", column.len()),
            ));
        }
        if let Some(i) = column.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: i, col: self.n_time() });
        }
        let (n, m) = (self.n_state(), self.n_time());
        let old = &self.values;
        self.values = Mat::from_fn(n, m + 1, |i, j| if j < m { old[(i, j)] } else { column[i] });
        Ok(())
    }
}

/// Time-shift pairing over a series: pair `k` is `(column k, column k + 1)`.
#[derive(Debug, Clone)]
pub struct SnapshotPairStream {
    series: SnapshotMatrix,
}

impl SnapshotPairStream {
    pub fn len(&self) -> usize {
        self.series.n_time() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_state(&self) -> usize {
        self.series.n_state()
    }

    pub fn x(&self, k: usize) -> ColRef<'_, f64> {
        self.series.column(k)
    }

    pub fn y(&self, k: usize) -> ColRef<'_, f64> {
        self.series.column(k + 1)
    }

    /// `X = [x_0 .. x_{m-1}]` as a view.
    pub fn x_matrix(&self) -> MatRef<'_, f64> {
        self.series.values().subcols(0, self.len())
    }

    /// `Y = [y_0 .. y_{m-1}]` as a view.
    pub fn y_matrix(&self) -> MatRef<'_, f64> {
        self.series.values().subcols(1, self.len())
    }

    /// The underlying series (`len() + 1` columns).
    pub fn series(&self) -> &SnapshotMatrix {
        &self.series
    }

    /// Extends the stream by one pair whose `y` is `column`.
    pub fn push(&mut self, column: &[f64]) -> Result<()> {
        self.series.push_column(column)
    }
}

pub fn build_pairs(series: &SnapshotMatrix) -> Result<SnapshotPairStream> {
    if series.n_time() < 2 {
        return Err(Error::SeriesTooShort { n_time: series.n_time() });
    }
    Ok(SnapshotPairStream { series: series.clone() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    /// Noise standard deviation relative to each entry's magnitude.
    pub ratio: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub const KIND: &'static str = "amplitude-proportional-gaussian";

    pub fn new(ratio: f64, seed: u64) -> Result<Self> {
        let spec = Self { ratio, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ratio >= 0.0 && self.ratio.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "noise ratio must be finite and >= 0, got {}",
                self.ratio
            )));
        }
        Ok(())
    }
}

/// Returns `v + ratio * |v| * eps` per entry, `eps ~ N(0, 1)` drawn column-major
/// from a ChaCha8 stream seeded with `spec.seed`.
///
/// One normal deviate is consumed per entry even when `v == 0` or `ratio == 0`,
/// so the draw for entry `(i, k)` does not depend on the values.
pub fn add_noise(series: &SnapshotMatrix, spec: &NoiseSpec) -> Result<SnapshotMatrix> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (n, m) = (series.n_state(), series.n_time());
    let mut out = series.values.clone();
    for j in 0..m {
        for i in 0..n {
            let eps: f64 = StandardNormal.sample(&mut rng);
            let v = out[(i, j)];
            if spec.ratio != 0.0 {
                out[(i, j)] = v + spec.ratio * v.abs() * eps;
            }
        }
    }
    SnapshotMatrix::new(out, series.dt)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub m_train: usize,
    pub m_test: usize,
    /// Use the noise-free column `m_train - 1` as the prediction initial state.
    #[serde(default = "default_bridge")]
    pub bridge: bool,
}

fn default_bridge() -> bool {
    true
}

#[derive(Debug, Clone)]
pub struct Split {
    pub train: SnapshotPairStream,
    /// State at column `m_train - 1`; prediction step `k` targets column `m_train - 1 + k`.
    pub init_state: Vec<f64>,
    /// Clean columns `[m_train, m_train + m_test)`.
    pub test: SnapshotMatrix,
}

/// Splits a clean/noisy series pair into noisy training pairs, a prediction
/// initial state and the clean test window.
pub fn split(clean: &SnapshotMatrix, noisy: &SnapshotMatrix, spec: &SplitSpec) -> Result<Split> {
    if clean.n_state() != noisy.n_state() || clean.n_time() != noisy.n_time() {
        return Err(Error::shape(
            format!("{}x{}", clean.n_state(), clean.n_time()),
            format!("{}x{}", noisy.n_state(), noisy.n_time()),
        ));
    }
    let n_time = clean.n_time();
    if spec.m_train < 2 || spec.m_train + spec.m_test > n_time {
        return Err(Error::SplitOutOfRange {
            m_train: spec.m_train,
            m_test: spec.m_test,
            n_time,
        });
    }
    let train = build_pairs(&noisy.columns(0, spec.m_train))?;
    let source = if spec.bridge { clean } else { noisy };
    let init_state = source.column_vec(spec.m_train - 1);
    let test = clean.columns(spec.m_train, spec.m_train + spec.m_test);
    Ok(Split { train, init_state, test })
}

pub fn write_csv(series: &SnapshotMatrix, path: impl AsRef<Path>) -> Result<()> {
    write_csv_with_comment(series, path, None)
}

/// Writes the CSV layout with an extra `# ...` comment line after the header.
pub fn write_csv_with_comment(
    series: &SnapshotMatrix,
    path: impl AsRef<Path>,
    comment: Option<&str>,
) -> Result<()> {
    let path = path.as_ref();
    let io_err = |source| Error::Io { path: path.to_path_buf(), source };
    let file = File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    write_series(&mut w, series, comment).map_err(io_err)?;
    w.flush().map_err(io_err)
}

fn write_series(w: &mut impl Write, series: &SnapshotMatrix, comment: Option<&str>) -> std::io::Result<()> {
    writeln!(
        w,
        "# n_state,{},n_time,{},dt,{:e}",
        series.n_state(),
        series.n_time(),
        series.dt
    )?;
    if let Some(c) = comment {
        for line in c.lines() {
            writeln!(w, "# {line}")?;
        }
    }
    let mut line = String::new();
    for i in 0..series.n_state() {
        line.clear();
        for j in 0..series.n_time() {
            if j > 0 {
                line.push(',');
            }
            use std::fmt::Write as _;
            let _ = write!(line, "{:.16e}", series.values[(i, j)]);
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<SnapshotMatrix> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    parse_series(BufReader::new(file)).map_err(|e| match e {
        Error::Io { source, .. } => Error::Io { path: path.to_path_buf(), source },
        other => other,
    })
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

fn parse_series(reader: impl BufRead) -> Result<SnapshotMatrix> {
    let mut lines = reader.lines().enumerate();
    let io = |source| Error::Io { path: Default::default(), source };

    let (n_state, n_time, dt) = match lines.next() {
        Some((_, line)) => parse_header(&line.map_err(io)?)?,
        None => return Err(parse_err(1, "empty file")),
    };

    let mut data = Vec::with_capacity(n_state * n_time);
    let mut rows = 0usize;
    let mut last_line = 1;
    for (idx, line) in lines {
        let line_no = idx + 1;
        last_line = line_no;
        let line = line.map_err(io)?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if rows == n_state {
            return Err(parse_err(line_no, format!("more than {n_state} data rows")));
        }
        let before = data.len();
        for field in trimmed.split(',') {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| parse_err(line_no, format!("invalid number {:?}", field.trim())))?;
            if !v.is_finite() {
                return Err(parse_err(line_no, "non-finite value"));
            }
            data.push(v);
        }
        let got = data.len() - before;
        if got != n_time {
            return Err(parse_err(line_no, format!("expected {n_time} columns, found {got}")));
        }
        rows += 1;
    }
    if rows != n_state {
        return Err(parse_err(last_line, format!("expected {n_state} data rows, found {rows}")));
    }
    let values = Mat::from_fn(n_state, n_time, |i, j| data[i * n_time + j]);
    SnapshotMatrix::new(values, dt)
}

fn parse_header(line: &str) -> Result<(usize, usize, f64)> {
    let body = line
        .trim()
        .strip_prefix('#')
        .ok_or_else(|| parse_err(1, "missing '# n_state,..' header"))?;
    let fields: Vec<&str> = body.split(',').map(str::trim).collect();
    if fields.len() != 6 || fields[0] != "n_state" || fields[2] != "n_time" || fields[4] != "dt" {
        return Err(parse_err(1, "header must be '# n_state,<int>,n_time,<int>,dt,<float>'"));
    }
    let n_state = fields[1].parse().map_err(|_| parse_err(1, "bad n_state"))?;
    let n_time = fields[3].parse().map_err(|_| parse_err(1, "bad n_time"))?;
    let dt = fields[5].parse().map_err(|_| parse_err(1, "bad dt"))?;
    Ok((n_state, n_time, dt))
}
