use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Dimension {
    FK,
    CK,
    PK,
    MK,
}

impl Dimension {
    pub const ALL: [Dimension; 4] = [Self::FK, Self::CK, Self::PK, Self::MK];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::FK => "FK",
            Self::CK => "CK",
            Self::PK => "PK",
            Self::MK => "MK",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::FK => "factual",
            Self::CK => "conceptual",
            Self::PK => "procedural",
            Self::MK => "metacognitive",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|d| d.as_str().eq_ignore_ascii_case(s.trim()))
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Sorts "Q2" before "Q10".
pub fn question_key(q: &str) -> (String, u64, String) {
    let split = q.find(|c: char| c.is_ascii_digit()).unwrap_or(q.len());
    let (head, tail) = q.split_at(split);
    let digits: String = tail.chars().take_while(char::is_ascii_digit).collect();
    let rest = tail[digits.len()..].to_string();
    (head.to_string(), digits.parse().unwrap_or(0), rest)
}

pub(crate) fn sort_questions(qs: impl IntoIterator<Item = String>) -> Vec<String> {
    let mut v: Vec<String> = qs.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
    v.sort_by_key(|q| question_key(q));
    v
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub system: String,
    #[serde(rename = "question")]
    pub question_id: String,
    pub dimension: Dimension,
    pub score: u8,
}

pub const MAX_SCORE: i64 = 4;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RatingMatrix {
    cells: BTreeMap<(String, String, Dimension), u8>,
}

#[derive(Debug, Deserialize)]
struct RawRating {
    system: String,
    question: String,
    dimension: String,
    score: String,
}

impl RatingMatrix {
    pub fn from_records(records: impl IntoIterator<Item = RatingRecord>) -> Result<Self, EvalError> {
        let mut m = Self::default();
        for (i, r) in records.into_iter().enumerate() {
            m.insert(r, i + 1)?;
        }
        Ok(m)
    }

    fn insert(&mut self, r: RatingRecord, line: usize) -> Result<(), EvalError> {
        if i64::from(r.score) > MAX_SCORE {
            return Err(EvalError::ScoreOutOfRange {
                line,
                score: i64::from(r.score),
            });
        }
        let key = (r.system, r.question_id, r.dimension);
        if self.cells.contains_key(&key) {
            return Err(EvalError::DuplicateCell {
                line,
                cell: format!("{}/{}/{}", key.0, key.1, key.2),
            });
        }
        self.cells.insert(key, r.score);
        Ok(())
    }

    /// Parse `system,question,dimension,score` CSV; line numbers count the
    /// header as line 1.
    pub fn from_csv_str(text: &str) -> Result<Self, EvalError> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = rdr
            .headers()
            .map_err(|e| EvalError::Parse {
                line: 1,
                message: e.to_string(),
            })?
            .clone();
        for want in ["system", "question", "dimension", "score"] {
            if !headers.iter().any(|h| h == want) {
                return Err(EvalError::Parse {
                    line: 1,
                    message: format!("missing column {want:?}"),
                });
            }
        }
        let mut m = Self::default();
        for row in rdr.records() {
            let row = row.map_err(|e| EvalError::Parse {
                line: e.position().map_or(0, |p| p.line() as usize),
                message: e.to_string(),
            })?;
            let line = row.position().map_or(0, |p| p.line() as usize);
            let raw: RawRating = row.deserialize(Some(&headers)).map_err(|e| EvalError::Parse {
                line,
                message: e.to_string(),
            })?;
            let dimension = Dimension::parse(&raw.dimension).ok_or_else(|| EvalError::Parse {
                line,
                message: format!("unknown dimension {:?}", raw.dimension),
            })?;
            let score: i64 = raw.score.parse().map_err(|_| EvalError::Parse {
                line,
                message: format!("score {:?} is not an integer", raw.score),
            })?;
            if !(0..=MAX_SCORE).contains(&score) {
                return Err(EvalError::ScoreOutOfRange { line, score });
            }
            if raw.system.is_empty() || raw.question.is_empty() {
                return Err(EvalError::Parse {
                    line,
                    message: "system and question must be non-empty".into(),
                });
            }
            m.insert(
                RatingRecord {
                    system: raw.system,
                    question_id: raw.question,
                    dimension,
                    score: score as u8,
                },
                line,
            )?;
        }
        Ok(m)
    }

    pub fn systems(&self) -> Vec<String> {
        self.cells
            .keys()
            .map(|k| k.0.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    /// Every question rated for any system.
    pub fn questions(&self) -> Vec<String> {
        sort_questions(self.cells.keys().map(|k| k.1.clone()))
    }

    pub fn score(&self, system: &str, question: &str, dim: Dimension) -> Option<u8> {
        self.cells
            .get(&(system.to_string(), question.to_string(), dim))
            .copied()
    }

    pub fn records(&self) -> Vec<RatingRecord> {
        self.cells
            .iter()
            .map(|((s, q, d), v)| RatingRecord {
                system: s.clone(),
                question_id: q.clone(),
                dimension: *d,
                score: *v,
            })
            .collect()
    }

    fn require_system(&self, system: &str) -> Result<(), EvalError> {
        if self.cells.keys().any(|k| k.0 == system) {
            Ok(())
        } else {
            Err(EvalError::IncompleteMatrix(format!("no ratings for system {system:?}")))
        }
    }

    /// Scores for one dimension, one per question, in question order.
    pub fn column(&self, system: &str, dim: Dimension) -> Result<Vec<f64>, EvalError> {
        self.require_system(system)?;
        self.questions()
            .iter()
            .map(|q| {
                self.score(system, q, dim)
                    .map(f64::from)
                    .ok_or_else(|| EvalError::IncompleteMatrix(format!("{system}/{q}/{dim} is missing")))
            })
            .collect()
    }

    /// Scores for one question, in dimension order.
    pub fn row(&self, system: &str, question: &str) -> Result<Vec<f64>, EvalError> {
        self.require_system(system)?;
        Dimension::ALL
            .iter()
            .map(|&d| {
                self.score(system, question, d)
                    .map(f64::from)
                    .ok_or_else(|| EvalError::IncompleteMatrix(format!("{system}/{question}/{d} is missing")))
            })
            .collect()
    }

    pub fn check_complete(&self) -> Result<(), EvalError> {
        for s in self.systems() {
            for d in Dimension::ALL {
                self.column(&s, d)?;
            }
        }
        if self.cells.is_empty() {
            return Err(EvalError::IncompleteMatrix("no ratings".into()));
        }
        Ok(())
    }
}

pub fn ingest_ratings(path: &Path) -> Result<RatingMatrix, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|e| EvalError::Io(format!("{}: {e}", path.display())))?;
    RatingMatrix::from_csv_str(&text)
}

fn mean(xs: &[f64]) -> f64 {
    crate::stats::mean(xs)
}

pub fn dimension_mean(m: &RatingMatrix, system: &str, dim: Dimension) -> Result<f64, EvalError> {
    let col = m.column(system, dim)?;
    if col.is_empty() {
        return Err(EvalError::IncompleteMatrix("no questions".into()));
    }
    Ok(mean(&col))
}

pub fn question_mean(m: &RatingMatrix, system: &str, question: &str) -> Result<f64, EvalError> {
    Ok(mean(&m.row(system, question)?))
}

/// Mean over every question and dimension of a complete system block.
pub fn overall_mean(m: &RatingMatrix, system: &str) -> Result<f64, EvalError> {
    let mut all = Vec::new();
    for d in Dimension::ALL {
        all.extend(m.column(system, d)?);
    }
    if all.is_empty() {
        return Err(EvalError::IncompleteMatrix("no questions".into()));
    }
    Ok(mean(&all))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = "system,question,dimension,score\nA,Q1,FK,4\nA,Q1,CK,3\nA,Q1,PK,3\nA,Q1,MK,3\nA,Q2,FK,0\nA,Q2,CK,0\nA,Q2,PK,0\nA,Q2,MK,0\n";

    #[test]
    fn means() {
        let m = RatingMatrix::from_csv_str(SMALL).unwrap();
        assert_eq!(question_mean(&m, "A", "Q1").unwrap(), 3.25);
        assert_eq!(question_mean(&m, "A", "Q2").unwrap(), 0.0);
        assert_eq!(dimension_mean(&m, "A", Dimension::FK).unwrap(), 2.0);
        assert_eq!(overall_mean(&m, "A").unwrap(), 13.0 / 8.0);
    }

    #[test]
    fn score_out_of_range() {
        let e = RatingMatrix::from_csv_str("system,question,dimension,score\nA,Q1,FK,5\n").unwrap_err();
        assert!(matches!(e, EvalError::ScoreOutOfRange { line: 2, score: 5 }), "{e:?}");
        let e = RatingMatrix::from_csv_str("system,question,dimension,score\nA,Q1,FK,-1\n").unwrap_err();
        assert!(matches!(e, EvalError::ScoreOutOfRange { score: -1, .. }));
    }

    #[test]
    fn duplicates_and_parse_errors() {
        let e = RatingMatrix::from_csv_str("system,question,dimension,score\nA,Q1,FK,1\nA,Q1,FK,2\n").unwrap_err();
        assert!(matches!(e, EvalError::DuplicateCell { line: 3, .. }), "{e:?}");
        let e = RatingMatrix::from_csv_str("system,question,dimension,score\nA,Q1,XK,1\n").unwrap_err();
        assert!(matches!(e, EvalError::Parse { line: 2, .. }), "{e:?}");
        let e = RatingMatrix::from_csv_str("system,question,dimension,score\nA,Q1,FK,1.5\n").unwrap_err();
        assert!(matches!(e, EvalError::Parse { line: 2, .. }));
        let e = RatingMatrix::from_csv_str("system,question,score\n").unwrap_err();
        assert!(matches!(e, EvalError::Parse { line: 1, .. }));
    }

    #[test]
    fn incomplete_matrix() {
        let m = RatingMatrix::from_csv_str("system,question,dimension,score\nA,Q1,FK,1\nA,Q2,CK,2\n").unwrap();
        assert!(matches!(
            dimension_mean(&m, "A", Dimension::FK),
            Err(EvalError::IncompleteMatrix(_))
        ));
        assert!(matches!(
            question_mean(&m, "A", "Q1"),
            Err(EvalError::IncompleteMatrix(_))
        ));
        assert!(matches!(
            dimension_mean(&m, "B", Dimension::FK),
            Err(EvalError::IncompleteMatrix(_))
        ));
        assert!(m.check_complete().is_err());
    }

    #[test]
    fn natural_question_order() {
        assert_eq!(
            sort_questions(["Q10".to_string(), "Q2".to_string(), "Q1".to_string()]),
            vec!["Q1", "Q2", "Q10"]
        );
    }
}
