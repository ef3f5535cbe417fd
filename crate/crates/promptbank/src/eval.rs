//! Scoring prediction files against reference files.

use std::collections::BTreeMap;
use std::path::Path;

use promptbank_core::metrics::{evaluate, self_bleu, EvalReport};
use serde::{Deserialize, Serialize};

use crate::error::{PipelineError, Result};
use crate::io::json::{parse_jsonl, read_jsonl};
use crate::io::read_text;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct References {
    pub id: String,
    pub texts: Vec<String>,
}

/// Scores every reference item in reference-file order. Each needs a
/// non-empty prediction; extra predictions are ignored.
pub fn evaluate_records(predictions: &[Prediction], references: &[References]) -> Result<EvalReport> {
    let by_id: BTreeMap<&str, &str> = predictions.iter().map(|p| (p.id.as_str(), p.text.as_str())).collect();
    let mut ids = Vec::with_capacity(references.len());
    let mut candidates = Vec::with_capacity(references.len());
    let mut refs = Vec::with_capacity(references.len());
    for r in references {
        match by_id.get(r.id.as_str()) {
            Some(text) if !text.trim().is_empty() => candidates.push(*text),
            _ => return Err(PipelineError::MissingId(r.id.clone())),
        }
        ids.push(r.id.as_str());
        refs.push(r.texts.clone());
    }
    Ok(evaluate(&ids, &candidates, &refs)?)
}

pub fn evaluate_run(predictions: &Path, references: &Path) -> Result<EvalReport> {
    let preds: Vec<Prediction> = read_jsonl(predictions)?;
    let refs: Vec<References> = read_jsonl(references)?;
    evaluate_records(&preds, &refs)
}

/// Sentences from a predictions file (`.jsonl`) or one sentence per
/// non-blank line otherwise.
pub fn read_sentences(path: &Path) -> Result<Vec<String>> {
    let text = read_text(path)?;
    if path.extension().is_some_and(|e| e == "jsonl") {
        let preds: Vec<Prediction> = parse_jsonl(path, &text)?;
        Ok(preds.into_iter().map(|p| p.text).collect())
    } else {
        Ok(text.lines().filter(|l| !l.trim().is_empty()).map(String::from).collect())
    }
}

pub fn self_bleu_file(path: &Path) -> Result<f64> {
    Ok(self_bleu(&read_sentences(path)?)?)
}
