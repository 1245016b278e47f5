use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use super::{AssistantError, TurnRecord};

/// Append one record as a single JSON line.
pub fn append_record(path: &Path, record: &TurnRecord) -> Result<(), AssistantError> {
    let err = |e: std::io::Error| AssistantError::Log(format!("{}: {e}", path.display()));
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(err)?;
    }
    let mut line = serde_json::to_string(record).map_err(|e| AssistantError::Log(e.to_string()))?;
    line.push('\n');
    let mut f = OpenOptions::new().create(true).append(true).open(path).map_err(err)?;
    f.write_all(line.as_bytes()).map_err(err)?;
    f.flush().map_err(err)
}

/// Parse a session log; blank lines are skipped, line numbers are 1-based.
pub fn read_log(path: &Path) -> Result<Vec<TurnRecord>, AssistantError> {
    let f = std::fs::File::open(path).map_err(|e| AssistantError::Parse {
        line: 0,
        message: format!("{}: {e}", path.display()),
    })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| AssistantError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| AssistantError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}
