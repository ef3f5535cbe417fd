//! JSON documents and line-delimited JSON records.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::{read_text, write_bytes};
use crate::error::{PipelineError, Result};

fn json_err(path: &Path) -> impl FnOnce(serde_json::Error) -> PipelineError + '_ {
    move |source| PipelineError::Json { path: path.into(), source }
}

/// Pretty-printed, newline-terminated.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(json_err(path))?;
    bytes.push(b'\n');
    write_bytes(path, &bytes)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?).map_err(json_err(path))
}

/// One compact record per line.
pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut bytes = Vec::new();
    for r in records {
        serde_json::to_writer(&mut bytes, r).map_err(json_err(path))?;
        bytes.push(b'\n');
    }
    write_bytes(path, &bytes)
}

/// Parses every non-blank line; the first bad line fails the whole file
/// with its 1-based line number.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    parse_jsonl(path, &read_text(path)?)
}

pub(crate) fn parse_jsonl<T: DeserializeOwned>(path: &Path, text: &str) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(line)
            .map_err(|e| PipelineError::MalformedRecord { path: path.into(), line: i + 1, reason: e.to_string() })?;
        out.push(record);
    }
    Ok(out)
}
