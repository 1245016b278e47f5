//! Rating aggregation, paired t-tests and latency comparison for assistant
//! evaluations, with checks of published aggregates against recomputation.

pub mod consistency;
pub mod fixtures;
pub mod latency;
pub mod ratings;
pub mod report;
pub mod stats;

pub use consistency::{consistency_check, Discrepancy, Published, PublishedValue, Recomputed};
pub use latency::{ingest_latency, latency_summary, LatencyRow, LatencySummary, LatencyTable};
pub use ratings::{dimension_mean, ingest_ratings, overall_mean, question_mean, Dimension, RatingMatrix, RatingRecord};
pub use report::{report, Report, ReportOptions, ReportOutput};
pub use stats::{paired_t_test, t_sf_two_tailed, TTestResult};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: score {score} is outside 0..=4")]
    ScoreOutOfRange { line: usize, score: i64 },
    #[error("line {line}: duplicate cell {cell}")]
    DuplicateCell { line: usize, cell: String },
    #[error("incomplete data: {0}")]
    IncompleteMatrix(String),
    #[error("all paired differences are equal, so t is undefined")]
    DegenerateDifferences,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("{0}")]
    Io(String),
}

/// Read a sample for `eval ttest`: either inline numbers ("3,3,2,2,1") or
/// `path.csv:column`.
pub fn parse_sample(spec: &str) -> Result<Vec<f64>, EvalError> {
    let inline: Result<Vec<f64>, _> = spec.split(',').map(|s| s.trim().parse::<f64>()).collect();
    if let Ok(v) = inline {
        return Ok(v);
    }
    let (path, column) = spec
        .rsplit_once(':')
        .ok_or_else(|| EvalError::InvalidInput(format!("{spec:?} is neither numbers nor path:column")))?;
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| EvalError::Io(format!("{path}: {e}")))?;
    let headers = rdr
        .headers()
        .map_err(|e| EvalError::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let idx = headers
        .iter()
        .position(|h| h == column)
        .ok_or_else(|| EvalError::InvalidInput(format!("{path} has no column {column:?}")))?;
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| EvalError::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let cell = row.get(idx).unwrap_or("");
        out.push(cell.parse().map_err(|_| EvalError::Parse {
            line,
            message: format!("{cell:?} is not a number"),
        })?);
    }
    Ok(out)
}
