use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::EvalError;

pub const PUBLISHED_SCHEMA_VERSION: &str = "published/1";

/// An aggregate as printed in a source table, with the number of decimals it
/// was printed with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PublishedValue {
    pub name: String,
    pub value: f64,
    pub decimals: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Published {
    pub schema_version: String,
    /// Systems compared by the paired tests, in (a, b) order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair: Option<(String, String)>,
    pub values: Vec<PublishedValue>,
}

impl Published {
    pub fn from_json(text: &str) -> Result<Self, EvalError> {
        let p: Self = serde_json::from_str(text).map_err(|e| EvalError::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
        if p.schema_version != PUBLISHED_SCHEMA_VERSION {
            return Err(EvalError::InvalidInput(format!(
                "unsupported published-values schema {:?}",
                p.schema_version
            )));
        }
        Ok(p)
    }

    pub fn from_file(path: &Path) -> Result<Self, EvalError> {
        let text = std::fs::read_to_string(path).map_err(|e| EvalError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

/// A recomputed aggregate, or why it could not be computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Recomputed {
    Value(f64),
    Undefined(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discrepancy {
    pub name: String,
    pub published: f64,
    pub decimals: u32,
    pub recomputed: Option<f64>,
    pub note: String,
}

/// Whether `recomputed` rounds to what was printed.
pub fn agrees_at_precision(published: f64, decimals: u32, recomputed: f64) -> bool {
    let half_unit = 0.5 * 10f64.powi(-(decimals as i32));
    (recomputed - published).abs() <= half_unit + 1e-9
}

/// Compare every published value that has a recomputed counterpart. Names
/// with nothing recomputed are skipped.
pub fn consistency_check(published: &[PublishedValue], recomputed: &BTreeMap<String, Recomputed>) -> Vec<Discrepancy> {
    let mut out = Vec::new();
    for p in published {
        match recomputed.get(&p.name) {
            None => {}
            Some(Recomputed::Value(v)) if agrees_at_precision(p.value, p.decimals, *v) => {}
            Some(Recomputed::Value(v)) => out.push(Discrepancy {
                name: p.name.clone(),
                published: p.value,
                decimals: p.decimals,
                recomputed: Some(*v),
                note: format!(
                    "recomputed {:.prec$} does not round to the printed {:.prec$}",
                    v,
                    p.value,
                    prec = p.decimals as usize + 1
                ),
            }),
            Some(Recomputed::Undefined(why)) => out.push(Discrepancy {
                name: p.name.clone(),
                published: p.value,
                decimals: p.decimals,
                recomputed: None,
                note: format!("not computable from the inputs: {why}"),
            }),
        }
    }
    out
}
