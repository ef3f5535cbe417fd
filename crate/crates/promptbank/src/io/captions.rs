//! Pre-parsed caption records.
//!
//! One JSON object per line:
//! `{"id", "video_id", "text", "noun_phrases": [...], "triples": [["s","p","o"], ...]}`.

use std::path::Path;

use promptbank_core::corpus::{Caption, CaptionCorpus, LiteralWarning, Triple};
use serde::{Deserialize, Serialize};

use super::json::write_jsonl;
use super::read_text;
use crate::error::{PipelineError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionRecord {
    pub id: String,
    pub video_id: String,
    pub text: String,
    #[serde(default)]
    pub noun_phrases: Vec<String>,
    #[serde(default)]
    pub triples: Vec<[String; 3]>,
}

impl From<CaptionRecord> for Caption {
    fn from(r: CaptionRecord) -> Self {
        Caption {
            id: r.id,
            video_id: r.video_id,
            text: r.text,
            noun_phrases: r.noun_phrases,
            triples: r.triples.into_iter().map(|[s, p, o]| Triple::new(s, p, o)).collect(),
        }
    }
}

impl From<&Caption> for CaptionRecord {
    fn from(c: &Caption) -> Self {
        CaptionRecord {
            id: c.id.clone(),
            video_id: c.video_id.clone(),
            text: c.text.clone(),
            noun_phrases: c.noun_phrases.clone(),
            triples: c.triples.iter().map(|t| [t.subject.clone(), t.predicate.clone(), t.object.clone()]).collect(),
        }
    }
}

fn check(record: &CaptionRecord) -> std::result::Result<(), &'static str> {
    if record.id.is_empty() {
        return Err("empty id");
    }
    if record.video_id.is_empty() {
        return Err("empty video_id");
    }
    if record.text.trim().is_empty() {
        return Err("empty text");
    }
    // Caption text doubles as an embedding key, which is line-delimited.
    if record.text.contains(['\n', '\r']) {
        return Err("text contains a line break");
    }
    Ok(())
}

/// Parses caption records in file order. Blank lines are skipped.
pub fn parse_captions(path: &Path, text: &str) -> Result<CaptionCorpus> {
    let mut captions = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |reason: String| PipelineError::MalformedRecord { path: path.into(), line: i + 1, reason };
        let record: CaptionRecord = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
        check(&record).map_err(|r| malformed(r.into()))?;
        captions.push(Caption::from(record));
    }
    Ok(CaptionCorpus::new(captions)?)
}

/// Loads a corpus along with its non-literal parse fragments.
pub fn load_captions(path: &Path) -> Result<(CaptionCorpus, Vec<LiteralWarning>)> {
    let corpus = parse_captions(path, &read_text(path)?)?;
    let warnings = corpus.literal_warnings();
    for w in &warnings {
        log::warn!("caption {}: parse fragment {:?} does not occur in the text", w.caption_id, w.fragment);
    }
    Ok((corpus, warnings))
}

pub fn write_captions(path: &Path, corpus: &CaptionCorpus) -> Result<()> {
    let records: Vec<CaptionRecord> = corpus.captions().iter().map(CaptionRecord::from).collect();
    write_jsonl(path, &records)
}
