//! Bundled evaluation inputs: the two-system rating table, the response-time
//! table and the aggregates printed alongside them.

use crate::{EvalError, LatencyTable, Published, RatingMatrix};

pub const RATINGS_CSV: &str = include_str!("../fixtures/ratings.csv");
pub const LATENCY_CSV: &str = include_str!("../fixtures/latency.csv");
pub const PUBLISHED_JSON: &str = include_str!("../fixtures/published.json");

pub fn ratings() -> Result<RatingMatrix, EvalError> {
    RatingMatrix::from_csv_str(RATINGS_CSV)
}

pub fn latency() -> Result<LatencyTable, EvalError> {
    LatencyTable::from_csv_str(LATENCY_CSV)
}

pub fn published() -> Result<Published, EvalError> {
    Published::from_json(PUBLISHED_JSON)
}
