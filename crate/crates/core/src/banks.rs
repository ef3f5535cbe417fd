//! Construction of the three memory banks.
//!
//! The noun-phrase bank keeps the most frequent normalized phrases. The
//! scene-graph bank is built in two phases because the candidate strings
//! need an external sentence encoder: [`emit_sg_candidates`] lists every
//! enhanced candidate per parsed triple, the encoder embeds them, then
//! [`select_enhanced_sg`] picks the candidate closest to its caption and
//! [`build_sg_bank`] keeps the most frequent selections. The caption bank is
//! the whole training split.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::corpus::{CaptionCorpus, EmbeddingBank, Triple};
use crate::error::{Error, Result};
use crate::text::contains_tokens;
use crate::vector::cosine;

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PhraseEntry {
    pub phrase: String,
    pub frequency: u64,
}

/// Top-N noun phrases ranked by (frequency desc, phrase asc).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NounPhraseBank {
    pub entries: Vec<PhraseEntry>,
}

impl NounPhraseBank {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn phrases(&self) -> impl Iterator<Item = &str> + '_ {
        self.entries.iter().map(|e| e.phrase.as_str())
    }

    pub fn contains(&self, phrase: &str) -> bool {
        self.entries.iter().any(|e| e.phrase == phrase)
    }
}

/// Sorts a frequency table by (count desc, key asc) and keeps `limit` rows.
pub fn rank_by_frequency(counts: BTreeMap<String, u64>, limit: usize) -> Vec<(String, u64)> {
    let mut ranked: Vec<(String, u64)> = counts.into_iter().collect();
    // BTreeMap iteration is already key-ascending, so a stable sort on
    // count alone yields the full (count desc, key asc) order.
    ranked.sort_by_key(|e| core::cmp::Reverse(e.1));
    ranked.truncate(limit);
    ranked
}

/// Phrase frequency over the corpus. A phrase counts once per caption.
pub fn phrase_frequencies(corpus: &CaptionCorpus) -> BTreeMap<String, u64> {
    let mut counts = BTreeMap::new();
    for c in corpus.captions() {
        for p in c.phrase_set() {
            *counts.entry(p).or_insert(0) += 1;
        }
    }
    counts
}

pub fn build_np_bank(corpus: &CaptionCorpus, limit: usize) -> Result<NounPhraseBank> {
    if limit == 0 {
        return Err(Error::InvalidParameter("N_p must be at least 1"));
    }
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let entries = rank_by_frequency(phrase_frequencies(corpus), limit)
        .into_iter()
        .map(|(phrase, frequency)| PhraseEntry { phrase, frequency })
        .collect();
    Ok(NounPhraseBank { entries })
}

/// Enhanced candidates for one parsed triple.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CandidateSet {
    pub caption_id: String,
    pub triple_index: usize,
    pub candidates: Vec<Triple>,
}

/// All candidate sets plus the deduplicated list of strings the sentence
/// encoder must embed (caption texts, candidate keys, candidate endpoints
/// and every corpus noun phrase).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CandidateManifest {
    pub sets: Vec<CandidateSet>,
    pub strings: Vec<String>,
}

/// Phrases of the caption that contain `endpoint` on token boundaries,
/// preceded by the endpoint itself.
fn expand_endpoint(endpoint: &str, phrases: &[String]) -> Vec<String> {
    let mut out = Vec::with_capacity(4);
    out.push(String::from(endpoint));
    for p in phrases {
        if p != endpoint && contains_tokens(p, endpoint) {
            out.push(p.clone());
        }
    }
    out
}

/// Enumerates the enhanced candidates of one triple: every
/// ⟨a, predicate, b⟩ with `a` drawn from the subject expansions and `b`
/// from the object expansions. The original triple is always first.
pub fn enhanced_candidates(triple: &Triple, phrases: &[String]) -> Vec<Triple> {
    let t = triple.normalized();
    let subjects = expand_endpoint(&t.subject, phrases);
    let objects = expand_endpoint(&t.object, phrases);
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(subjects.len() * objects.len());
    for a in &subjects {
        for b in &objects {
            let cand = Triple::new(a.clone(), t.predicate.clone(), b.clone());
            if seen.insert(cand.key()) {
                out.push(cand);
            }
        }
    }
    out
}

pub fn emit_sg_candidates(corpus: &CaptionCorpus) -> CandidateManifest {
    let mut sets = Vec::new();
    let mut strings = BTreeSet::new();
    for c in corpus.captions() {
        let phrases = c.phrase_set();
        strings.extend(phrases.iter().cloned());
        if c.triples.is_empty() {
            continue;
        }
        strings.insert(c.text.clone());
        for (i, t) in c.triples.iter().enumerate() {
            let candidates = enhanced_candidates(t, &phrases);
            for cand in &candidates {
                strings.insert(cand.key());
                strings.insert(cand.subject.clone());
                strings.insert(cand.object.clone());
            }
            sets.push(CandidateSet { caption_id: c.id.clone(), triple_index: i, candidates });
        }
    }
    strings.remove("");
    CandidateManifest { sets, strings: strings.into_iter().collect() }
}

/// The candidate chosen to stand for one parsed triple.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EnhancedTriple {
    #[cfg_attr(feature = "serde", serde(flatten))]
    pub triple: Triple,
    pub source_caption_id: String,
    pub triple_index: usize,
}

/// Ordering used when two candidates have the same cosine: more characters
/// first, then lexicographic.
fn tie_order(a: &str, b: &str) -> Ordering {
    b.chars().count().cmp(&a.chars().count()).then_with(|| a.cmp(b))
}

/// Picks the candidate whose sentence embedding is closest (cosine) to the
/// embedding of the caption text.
pub fn select_enhanced_sg(caption_text: &str, candidates: &[Triple], bge: &EmbeddingBank) -> Result<Triple> {
    let caption = bge.lookup(caption_text)?;
    let mut best: Option<(f64, String, &Triple)> = None;
    for cand in candidates {
        let key = cand.key();
        let score = cosine(caption, bge.lookup(&key)?);
        let better = match &best {
            None => true,
            Some((s, k, _)) => score > *s || (score == *s && tie_order(&key, k) == Ordering::Less),
        };
        if better {
            best = Some((score, key, cand));
        }
    }
    best.map(|(_, _, t)| t.clone()).ok_or(Error::EmptyInput)
}

/// Runs [`select_enhanced_sg`] for every candidate set of the manifest.
pub fn select_all(corpus: &CaptionCorpus, sets: &[CandidateSet], bge: &EmbeddingBank) -> Result<Vec<EnhancedTriple>> {
    sets.iter().map(|set| select_for_set(corpus, set, bge)).collect()
}

pub fn select_for_set(corpus: &CaptionCorpus, set: &CandidateSet, bge: &EmbeddingBank) -> Result<EnhancedTriple> {
    let caption = corpus.get(&set.caption_id).ok_or_else(|| Error::UnknownCaption(set.caption_id.clone()))?;
    let triple = select_enhanced_sg(&caption.text, &set.candidates, bge)?;
    Ok(EnhancedTriple { triple, source_caption_id: set.caption_id.clone(), triple_index: set.triple_index })
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SceneGraphEntry {
    #[cfg_attr(feature = "serde", serde(flatten))]
    pub triple: Triple,
    pub frequency: u64,
}

impl SceneGraphEntry {
    pub fn key(&self) -> String {
        self.triple.key()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SceneGraphBank {
    pub entries: Vec<SceneGraphEntry>,
}

impl SceneGraphBank {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn keys(&self) -> impl Iterator<Item = String> + '_ {
        self.entries.iter().map(SceneGraphEntry::key)
    }
}

/// Frequency table over selected key-strings, top `limit` retained.
pub fn build_sg_bank(selections: &[EnhancedTriple], limit: usize) -> SceneGraphBank {
    let mut counts = BTreeMap::new();
    let mut structure: BTreeMap<String, &Triple> = BTreeMap::new();
    for s in selections {
        let key = s.triple.key();
        structure.entry(key.clone()).or_insert(&s.triple);
        *counts.entry(key).or_insert(0) += 1;
    }
    let entries = rank_by_frequency(counts, limit)
        .into_iter()
        .map(|(key, frequency)| SceneGraphEntry { triple: structure[&key].clone(), frequency })
        .collect();
    SceneGraphBank { entries }
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CaptionEntry {
    pub id: String,
    pub video_id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CaptionBank {
    pub entries: Vec<CaptionEntry>,
}

impl CaptionBank {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn build_ec_bank(corpus: &CaptionCorpus) -> CaptionBank {
    let entries = corpus
        .captions()
        .iter()
        .map(|c| CaptionEntry { id: c.id.clone(), video_id: c.video_id.clone(), text: c.text.clone() })
        .collect();
    CaptionBank { entries }
}
