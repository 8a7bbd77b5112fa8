//! Arrival-series loading, block aggregation, threshold excesses and the
//! empirical CDF.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use thiserror::Error;

/// Errors raised while loading or slicing an arrival series.
#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}, token {token}: {message}")]
    Parse {
        line: usize,
        token: usize,
        message: String,
    },

    #[error("invalid series: {0}")]
    InvalidSeries(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(
        "no observation strictly exceeds threshold {threshold} (max is {max}); lower the threshold"
    )]
    EmptyTail { threshold: f64, max: f64 },
}

/// On-disk layout of an arrival file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    /// Whitespace-separated decimal tokens.
    Plain,
    /// `date,count` with an ISO-8601 date per record.
    Csv,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "plain" => Ok(Format::Plain),
            "csv" => Ok(Format::Csv),
            other => Err(format!("unknown format {other:?} (expected plain or csv)")),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Plain => "plain",
            Format::Csv => "csv",
        })
    }
}

/// Ordered nonnegative observations, optionally dated.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrivalSeries {
    values: Vec<f64>,
    labels: Option<Vec<String>>,
}

impl ArrivalSeries {
    /// Validates that every value is finite and nonnegative.
    pub fn new(values: Vec<f64>) -> Result<Self, IngestError> {
        Self::build(values, None)
    }

    /// Like [`ArrivalSeries::new`] but with one strictly increasing label per value.
    pub fn with_labels(values: Vec<f64>, labels: Vec<String>) -> Result<Self, IngestError> {
        Self::build(values, Some(labels))
    }

    fn build(values: Vec<f64>, labels: Option<Vec<String>>) -> Result<Self, IngestError> {
        if let Some(i) = values.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(IngestError::InvalidSeries(format!(
                "value {} at position {} is not a finite nonnegative count",
                values[i],
                i + 1
            )));
        }
        if let Some(labels) = &labels {
            if labels.len() != values.len() {
                return Err(IngestError::InvalidSeries(format!(
                    "{} labels for {} values",
                    labels.len(),
                    values.len()
                )));
            }
            if let Some(w) = labels.windows(2).position(|w| w[0] >= w[1]) {
                return Err(IngestError::InvalidSeries(format!(
                    "labels not strictly increasing at position {}: {} then {}",
                    w + 2,
                    labels[w],
                    labels[w + 1]
                )));
            }
        }
        Ok(Self { values, labels })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max(&self) -> Option<f64> {
        self.values.iter().copied().reduce(f64::max)
    }
}

/// Reads and validates a series from `path`.
pub fn load_series(path: impl AsRef<Path>, format: Format) -> Result<ArrivalSeries, IngestError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_series(&text, format)
}

/// Parses series text already in memory.
pub fn parse_series(text: &str, format: Format) -> Result<ArrivalSeries, IngestError> {
    match format {
        Format::Plain => parse_plain(text),
        Format::Csv => parse_csv(text),
    }
}

fn parse_count(raw: &str, line: usize, token: usize) -> Result<f64, IngestError> {
    let value: f64 = raw.parse().map_err(|_| IngestError::Parse {
        line,
        token,
        message: format!("{raw:?} is not a number"),
    })?;
    if !value.is_finite() {
        return Err(IngestError::Parse {
            line,
            token,
            message: format!("{raw:?} is not finite"),
        });
    }
    if value < 0.0 {
        return Err(IngestError::Parse {
            line,
            token,
            message: format!("negative count {raw}"),
        });
    }
    Ok(value)
}

fn parse_plain(text: &str) -> Result<ArrivalSeries, IngestError> {
    let mut values = Vec::new();
    for (line_idx, line) in text.lines().enumerate() {
        for raw in line.split_whitespace() {
            let token = values.len() + 1;
            values.push(parse_count(raw, line_idx + 1, token)?);
        }
    }
    ArrivalSeries::new(values)
}

fn parse_csv(text: &str) -> Result<ArrivalSeries, IngestError> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let header_err = |message: String| IngestError::Parse {
        line: 1,
        token: 1,
        message,
    };
    let (_, header) = lines
        .next()
        .ok_or_else(|| header_err("missing `date,count` header".into()))?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    if columns != ["date", "count"] {
        return Err(header_err(format!(
            "expected header `date,count`, found {header:?}"
        )));
    }

    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (line_idx, line) in lines {
        let line_no = line_idx + 1;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 2 || fields.iter().any(|f| f.is_empty()) {
            return Err(IngestError::Parse {
                line: line_no,
                token: fields.len().min(2),
                message: format!("expected 2 columns `date,count`, found {line:?}"),
            });
        }
        NaiveDate::parse_from_str(fields[0], "%Y-%m-%d").map_err(|e| IngestError::Parse {
            line: line_no,
            token: 1,
            message: format!("{:?} is not an ISO-8601 date: {e}", fields[0]),
        })?;
        values.push(parse_count(fields[1], line_no, 2)?);
        labels.push(fields[0].to_string());
    }
    ArrivalSeries::with_labels(values, labels)
}

/// Maximum of each full block of `block_len` consecutive values; a trailing
/// partial block is dropped.
pub fn block_maxima(series: &ArrivalSeries, block_len: usize) -> Result<Vec<f64>, IngestError> {
    if block_len == 0 {
        return Err(IngestError::InvalidArgument(
            "block length must be at least 1".into(),
        ));
    }
    if series.is_empty() {
        return Err(IngestError::InvalidArgument("series is empty".into()));
    }
    Ok(series
        .values()
        .chunks_exact(block_len)
        .map(|block| block.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect())
}

/// Excesses `y = x - u` over a threshold, with the source sample size.
#[derive(Debug, Clone, PartialEq)]
pub struct ExcessSample {
    threshold: f64,
    excesses: Vec<f64>,
    n_total: usize,
}

impl ExcessSample {
    /// Builds a sample directly from excesses, e.g. for synthetic draws.
    pub fn new(threshold: f64, excesses: Vec<f64>, n_total: usize) -> Result<Self, IngestError> {
        if !threshold.is_finite() {
            return Err(IngestError::InvalidArgument(format!(
                "threshold {threshold} is not finite"
            )));
        }
        if excesses.is_empty() {
            return Err(IngestError::InvalidArgument("no excesses".into()));
        }
        if excesses.len() > n_total {
            return Err(IngestError::InvalidArgument(format!(
                "{} excesses out of only {n_total} observations",
                excesses.len()
            )));
        }
        if let Some(bad) = excesses.iter().find(|y| !(y.is_finite() && **y > 0.0)) {
            return Err(IngestError::InvalidArgument(format!(
                "excess {bad} is not strictly positive"
            )));
        }
        Ok(Self {
            threshold,
            excesses,
            n_total,
        })
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn excesses(&self) -> &[f64] {
        &self.excesses
    }

    pub fn n_total(&self) -> usize {
        self.n_total
    }

    pub fn n_exceed(&self) -> usize {
        self.excesses.len()
    }

    /// Empirical estimate of P(X > u).
    pub fn exceedance_fraction(&self) -> f64 {
        self.n_exceed() as f64 / self.n_total as f64
    }

    pub fn mean_excess(&self) -> f64 {
        self.excesses.iter().sum::<f64>() / self.n_exceed() as f64
    }
}

/// Collects `x - u` for every `x > u`, in series order.
pub fn excesses_over(series: &ArrivalSeries, u: f64) -> Result<ExcessSample, IngestError> {
    if !u.is_finite() {
        return Err(IngestError::InvalidArgument(format!(
            "threshold {u} is not finite"
        )));
    }
    let excesses: Vec<f64> = series
        .values()
        .iter()
        .filter(|&&x| x > u)
        .map(|&x| x - u)
        .collect();
    if excesses.is_empty() {
        return Err(IngestError::EmptyTail {
            threshold: u,
            max: series.max().unwrap_or(f64::NAN),
        });
    }
    ExcessSample::new(u, excesses, series.len())
}

/// Right-continuous empirical CDF, `F(x) = #{points <= x} / n`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepFunction {
    points: Vec<f64>,
}

impl StepFunction {
    pub fn eval(&self, x: f64) -> f64 {
        let below = self.points.partition_point(|&p| p <= x);
        below as f64 / self.points.len() as f64
    }

    /// Sorted sample points.
    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.points[0]
    }

    pub fn max(&self) -> f64 {
        self.points[self.points.len() - 1]
    }
}

pub fn ecdf(sample: &[f64]) -> Result<StepFunction, IngestError> {
    if sample.is_empty() {
        return Err(IngestError::InvalidArgument(
            "ECDF of an empty sample".into(),
        ));
    }
    if sample.iter().any(|x| !x.is_finite()) {
        return Err(IngestError::InvalidArgument(
            "ECDF sample contains a non-finite value".into(),
        ));
    }
    let mut points = sample.to_vec();
    points.sort_by(f64::total_cmp);
    Ok(StepFunction { points })
}
