use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use labassist_core::assistant::{AssistantError, TurnRecord};

use crate::ratings::question_key;
use crate::stats::{mean, sample_sd};
use crate::EvalError;

pub const SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    Perception,
    Llm,
    Total,
}

impl Component {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "perception" => Some(Self::Perception),
            "llm" => Some(Self::Llm),
            "total" => Some(Self::Total),
            _ => None,
        }
    }
}

/// Times for one (system, question). Systems measured end to end have only
/// a total.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencyRow {
    pub perception: Option<f64>,
    pub llm: Option<f64>,
    pub total: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LatencyTable {
    rows: BTreeMap<String, BTreeMap<String, LatencyRow>>,
}

#[derive(Debug, Default, Clone, Copy)]
struct Partial {
    perception: Option<f64>,
    llm: Option<f64>,
    total: Option<f64>,
}

impl LatencyTable {
    pub fn from_csv_str(text: &str) -> Result<Self, EvalError> {
        #[derive(Deserialize)]
        struct Raw {
            system: String,
            question: String,
            component: String,
            seconds: f64,
        }
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
        let mut partial: BTreeMap<(String, String), (Partial, usize)> = BTreeMap::new();
        for row in rdr.records() {
            let row = row.map_err(|e| EvalError::Parse {
                line: e.position().map_or(0, |p| p.line() as usize),
                message: e.to_string(),
            })?;
            let line = row.position().map_or(0, |p| p.line() as usize);
            let raw: Raw = row.deserialize(Some(&headers)).map_err(|e| EvalError::Parse {
                line,
                message: e.to_string(),
            })?;
            let comp = Component::parse(&raw.component).ok_or_else(|| EvalError::Parse {
                line,
                message: format!("unknown component {:?}", raw.component),
            })?;
            if !(raw.seconds.is_finite() && raw.seconds >= 0.0) {
                return Err(EvalError::Parse {
                    line,
                    message: "seconds must be a non-negative number".into(),
                });
            }
            let entry = partial
                .entry((raw.system.clone(), raw.question.clone()))
                .or_insert((Partial::default(), line));
            entry.1 = line;
            let slot = match comp {
                Component::Perception => &mut entry.0.perception,
                Component::Llm => &mut entry.0.llm,
                Component::Total => &mut entry.0.total,
            };
            if slot.is_some() {
                return Err(EvalError::DuplicateCell {
                    line,
                    cell: format!("{}/{}/{:?}", raw.system, raw.question, comp),
                });
            }
            *slot = Some(raw.seconds);
        }
        let mut t = Self::default();
        for ((s, q), (p, line)) in partial {
            let row = match (p.perception, p.llm, p.total) {
                (Some(a), Some(b), None) => LatencyRow {
                    perception: Some(a),
                    llm: Some(b),
                    total: a + b,
                },
                (Some(a), Some(b), Some(tot)) => {
                    if (a + b - tot).abs() > SUM_TOLERANCE {
                        return Err(EvalError::Parse {
                            line,
                            message: format!("{s}/{q}: total {tot} is not perception + llm ({})", a + b),
                        });
                    }
                    LatencyRow {
                        perception: Some(a),
                        llm: Some(b),
                        total: tot,
                    }
                }
                (None, None, Some(tot)) => LatencyRow {
                    perception: None,
                    llm: None,
                    total: tot,
                },
                _ => {
                    return Err(EvalError::IncompleteMatrix(format!(
                        "{s}/{q}: give both perception and llm, or a total"
                    )))
                }
            };
            t.insert(&s, &q, row);
        }
        Ok(t)
    }

    /// One row per completed turn: perception plus generation time, keyed by
    /// the turn's question id (or "T<turn_id>").
    pub fn from_records(system: &str, records: &[TurnRecord]) -> Result<Self, EvalError> {
        let mut t = Self::default();
        for r in records.iter().filter(|r| r.error.is_none()) {
            let q = r.question_id.clone().unwrap_or_else(|| format!("T{}", r.turn_id));
            if t.get(system, &q).is_some() {
                return Err(EvalError::DuplicateCell {
                    line: 0,
                    cell: format!("{system}/{q}"),
                });
            }
            t.insert(
                system,
                &q,
                LatencyRow {
                    perception: Some(r.latency.perception_s),
                    llm: Some(r.latency.llm_s),
                    total: r.latency.reported_total(),
                },
            );
        }
        Ok(t)
    }

    pub fn insert(&mut self, system: &str, question: &str, row: LatencyRow) {
        self.rows
            .entry(system.to_string())
            .or_default()
            .insert(question.to_string(), row);
    }

    /// Add every row of `other`; a (system, question) present in both is an
    /// error.
    pub fn merge(&mut self, other: LatencyTable) -> Result<(), EvalError> {
        for (s, qs) in other.rows {
            for (q, row) in qs {
                if self.get(&s, &q).is_some() {
                    return Err(EvalError::DuplicateCell {
                        line: 0,
                        cell: format!("{s}/{q}"),
                    });
                }
                self.insert(&s, &q, row);
            }
        }
        Ok(())
    }

    pub fn get(&self, system: &str, question: &str) -> Option<&LatencyRow> {
        self.rows.get(system)?.get(question)
    }

    pub fn systems(&self) -> Vec<String> {
        self.rows.keys().cloned().collect()
    }

    /// Rows of one system in natural question order.
    pub fn rows(&self, system: &str) -> Vec<(String, LatencyRow)> {
        let mut v: Vec<(String, LatencyRow)> = self
            .rows
            .get(system)
            .map(|m| m.iter().map(|(q, r)| (q.clone(), *r)).collect())
            .unwrap_or_default();
        v.sort_by_key(|(q, _)| question_key(q));
        v
    }

    pub fn totals(&self, system: &str) -> Vec<f64> {
        self.rows(system).into_iter().map(|(_, r)| r.total).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

pub fn ingest_latency(path: &Path, system_for_logs: &str) -> Result<LatencyTable, EvalError> {
    let is_log = path.extension().is_some_and(|e| e == "jsonl" || e == "ndjson");
    if is_log {
        let records = labassist_core::assistant::read_log(path).map_err(|e| match e {
            AssistantError::Parse { line, message } => EvalError::Parse { line, message },
            other => EvalError::Io(other.to_string()),
        })?;
        return LatencyTable::from_records(system_for_logs, &records);
    }
    let text = std::fs::read_to_string(path).map_err(|e| EvalError::Io(format!("{}: {e}", path.display())))?;
    LatencyTable::from_csv_str(&text)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub system: String,
    pub n: usize,
    pub totals: Vec<f64>,
    pub mean_total: f64,
    pub sd_total: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_perception: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_llm: Option<f64>,
}

pub fn summarize_system(table: &LatencyTable, system: &str) -> Result<LatencySummary, EvalError> {
    let rows = table.rows(system);
    if rows.len() < 2 {
        return Err(EvalError::IncompleteMatrix(format!(
            "{system}: need at least 2 questions for a standard deviation, have {}",
            rows.len()
        )));
    }
    let totals: Vec<f64> = rows.iter().map(|(_, r)| r.total).collect();
    let comp = |f: fn(&LatencyRow) -> Option<f64>| -> Option<f64> {
        let v: Option<Vec<f64>> = rows.iter().map(|(_, r)| f(r)).collect();
        v.map(|v| mean(&v))
    };
    Ok(LatencySummary {
        system: system.to_string(),
        n: rows.len(),
        mean_total: mean(&totals),
        sd_total: sample_sd(&totals),
        mean_perception: comp(|r| r.perception),
        mean_llm: comp(|r| r.llm),
        totals,
    })
}

pub fn latency_summary(table: &LatencyTable) -> Result<Vec<LatencySummary>, EvalError> {
    table.systems().iter().map(|s| summarize_system(table, s)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const CSV: &str = "system,question,component,seconds\nA,Q1,perception,0.3\nA,Q1,llm,0.8\nA,Q2,perception,0.2\nA,Q2,llm,1.5\nB,Q1,total,2.1\nB,Q2,total,3.4\n";

    #[test]
    fn components_sum_to_totals() {
        let t = LatencyTable::from_csv_str(CSV).unwrap();
        assert!((t.get("A", "Q1").unwrap().total - 1.1).abs() < 1e-12);
        let s = summarize_system(&t, "A").unwrap();
        assert!((s.mean_total - 1.4).abs() < 1e-12);
        assert!((s.mean_perception.unwrap() - 0.25).abs() < 1e-12);
        assert_eq!(summarize_system(&t, "B").unwrap().mean_perception, None);
    }

    #[test]
    fn inconsistent_total_is_rejected() {
        let bad = format!("{CSV}A,Q1,total,9.0\n");
        assert!(matches!(LatencyTable::from_csv_str(&bad), Err(EvalError::Parse { .. })));
        let ok = format!("{CSV}A,Q1,total,1.1\n");
        assert!(LatencyTable::from_csv_str(&ok).is_ok());
    }

    #[test]
    fn errors() {
        let dup = format!("{CSV}A,Q1,llm,0.8\n");
        assert!(matches!(
            LatencyTable::from_csv_str(&dup),
            Err(EvalError::DuplicateCell { line: 8, .. })
        ));
        let half = "system,question,component,seconds\nA,Q1,llm,0.8\n";
        assert!(matches!(
            LatencyTable::from_csv_str(half),
            Err(EvalError::IncompleteMatrix(_))
        ));
        let single = "system,question,component,seconds\nA,Q1,total,0.8\n";
        let t = LatencyTable::from_csv_str(single).unwrap();
        assert!(matches!(latency_summary(&t), Err(EvalError::IncompleteMatrix(_))));
        let neg = "system,question,component,seconds\nA,Q1,total,-1\n";
        assert!(matches!(
            LatencyTable::from_csv_str(neg),
            Err(EvalError::Parse { line: 2, .. })
        ));
    }
}
