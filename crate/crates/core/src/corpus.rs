//! Captions, embedding banks and video frame features.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::text::normalize;

/// A ⟨subject, predicate, object⟩ relation parsed from a caption.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Triple {
    pub subject: String,
    pub predicate: String,
    pub object: String,
}

impl Triple {
    pub fn new(subject: impl Into<String>, predicate: impl Into<String>, object: impl Into<String>) -> Self {
        Self { subject: subject.into(), predicate: predicate.into(), object: object.into() }
    }

    /// Subject, predicate and object joined by single spaces. This string
    /// is both the bank key and the text handed to the sentence encoder.
    pub fn key(&self) -> String {
        let mut s = String::with_capacity(self.subject.len() + self.predicate.len() + self.object.len() + 2);
        s.push_str(&self.subject);
        s.push(' ');
        s.push_str(&self.predicate);
        s.push(' ');
        s.push_str(&self.object);
        s
    }

    /// The same triple with every part normalized.
    pub fn normalized(&self) -> Self {
        Self { subject: normalize(&self.subject), predicate: normalize(&self.predicate), object: normalize(&self.object) }
    }
}

/// One training caption with its pre-parsed noun phrases and triples.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Caption {
    pub id: String,
    pub video_id: String,
    pub text: String,
    #[cfg_attr(feature = "serde", serde(default))]
    pub noun_phrases: Vec<String>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub triples: Vec<Triple>,
}

impl Caption {
    /// Normalized noun phrases with duplicates removed, first occurrence
    /// order preserved.
    pub fn phrase_set(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::with_capacity(self.noun_phrases.len());
        for p in &self.noun_phrases {
            let n = normalize(p);
            if !n.is_empty() && !out.contains(&n) {
                out.push(n);
            }
        }
        out
    }
}

/// A parse fragment that does not occur literally in its caption.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LiteralWarning {
    pub caption_id: String,
    pub fragment: String,
}

/// Captions grouped by video. Immutable once built.
#[derive(Debug, Clone)]
pub struct CaptionCorpus {
    captions: Vec<Caption>,
    by_id: BTreeMap<String, usize>,
    by_video: BTreeMap<String, Vec<usize>>,
}

impl CaptionCorpus {
    /// Builds a corpus, preserving caption order.
    pub fn new(captions: Vec<Caption>) -> Result<Self> {
        if captions.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut by_id = BTreeMap::new();
        let mut by_video: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, c) in captions.iter().enumerate() {
            if by_id.insert(c.id.clone(), i).is_some() {
                return Err(Error::DuplicateId(c.id.clone()));
            }
            by_video.entry(c.video_id.clone()).or_default().push(i);
        }
        Ok(Self { captions, by_id, by_video })
    }

    pub fn captions(&self) -> &[Caption] {
        &self.captions
    }

    pub fn len(&self) -> usize {
        self.captions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.captions.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Caption> {
        self.by_id.get(id).map(|&i| &self.captions[i])
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.by_id.get(id).copied()
    }

    pub fn video_count(&self) -> usize {
        self.by_video.len()
    }

    /// Videos in id order, each with its captions in corpus order.
    pub fn videos(&self) -> impl Iterator<Item = (&str, impl Iterator<Item = &Caption> + '_)> + '_ {
        self.by_video
            .iter()
            .map(move |(v, idx)| (v.as_str(), idx.iter().map(move |&i| &self.captions[i])))
    }

    /// Caption ids of one video, in corpus order.
    pub fn caption_ids(&self, video_id: &str) -> Option<Vec<&str>> {
        self.by_video
            .get(video_id)
            .map(|idx| idx.iter().map(|&i| self.captions[i].id.as_str()).collect())
    }

    /// Noun phrases and triple endpoints that are not substrings of the
    /// normalized caption text. These are warnings, not errors: parsers
    /// lemmatize ("play" for "playing") and that is expected.
    pub fn literal_warnings(&self) -> Vec<LiteralWarning> {
        let mut out = Vec::new();
        for c in &self.captions {
            let text = normalize(&c.text);
            let fragments = c
                .noun_phrases
                .iter()
                .chain(c.triples.iter().flat_map(|t| [&t.subject, &t.object]));
            for f in fragments {
                let n = normalize(f);
                if n.is_empty() || !text.contains(n.as_str()) {
                    out.push(LiteralWarning { caption_id: c.id.clone(), fragment: f.clone() });
                }
            }
        }
        out
    }
}

/// Keyed row-major `f32` matrix. Vectors are kept exactly as loaded; cosine
/// normalization happens where they are used.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBank {
    keys: Vec<String>,
    dim: usize,
    data: Vec<f32>,
    index: BTreeMap<String, usize>,
}

impl EmbeddingBank {
    pub fn new(keys: Vec<String>, dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("embedding dimension must be at least 1"));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::RaggedMatrix { len: data.len(), dim });
        }
        let rows = data.len() / dim;
        if rows != keys.len() {
            return Err(Error::RowCountMismatch { rows, keys: keys.len() });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue(pos / dim));
        }
        let mut index = BTreeMap::new();
        for (i, k) in keys.iter().enumerate() {
            if index.insert(k.clone(), i).is_some() {
                return Err(Error::DuplicateKey(k.clone()));
            }
        }
        Ok(Self { keys, dim, data, index })
    }

    /// Builds a bank from `(key, vector)` pairs; every vector must have
    /// length `dim`.
    pub fn from_rows<K, I>(dim: usize, rows: I) -> Result<Self>
    where
        K: Into<String>,
        I: IntoIterator<Item = (K, Vec<f32>)>,
    {
        let mut keys = Vec::new();
        let mut data = Vec::new();
        for (k, v) in rows {
            if v.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: v.len() });
            }
            keys.push(k.into());
            data.extend_from_slice(&v);
        }
        Self::new(keys, dim, data)
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn keys(&self) -> &[String] {
        &self.keys
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn position(&self, key: &str) -> Option<usize> {
        self.index.get(key).copied()
    }

    pub fn get(&self, key: &str) -> Option<&[f32]> {
        self.position(key).map(|i| self.row(i))
    }

    /// Like [`get`](Self::get) but reports the missing key.
    pub fn lookup(&self, key: &str) -> Result<&[f32]> {
        self.get(key).ok_or_else(|| Error::MissingEmbedding(key.into()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f32])> + '_ {
        self.keys.iter().map(String::as_str).zip(self.data.chunks_exact(self.dim))
    }
}

/// `T × d` frame features of one video, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameMatrix {
    dim: usize,
    data: Vec<f32>,
}

impl FrameMatrix {
    pub fn new(dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("frame dimension must be at least 1"));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::RaggedMatrix { len: data.len(), dim });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue(pos / dim));
        }
        Ok(Self { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn frame_count(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn frames(&self) -> impl Iterator<Item = &[f32]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Every value multiplied by `factor`.
    pub fn scaled(&self, factor: f32) -> Self {
        Self { dim: self.dim, data: self.data.iter().map(|v| v * factor).collect() }
    }
}

/// Frame features per video, in insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoFeatureStore {
    dim: usize,
    videos: Vec<(String, FrameMatrix)>,
    index: BTreeMap<String, usize>,
}

impl VideoFeatureStore {
    pub fn new(dim: usize) -> Self {
        Self { dim, videos: Vec::new(), index: BTreeMap::new() }
    }

    pub fn insert(&mut self, video_id: impl Into<String>, frames: FrameMatrix) -> Result<()> {
        let video_id = video_id.into();
        if frames.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: frames.dim() });
        }
        if frames.frame_count() == 0 {
            return Err(Error::EmptyVideo(video_id));
        }
        if self.index.contains_key(&video_id) {
            return Err(Error::DuplicateVideoId(video_id));
        }
        self.index.insert(video_id.clone(), self.videos.len());
        self.videos.push((video_id, frames));
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.videos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.videos.is_empty()
    }

    pub fn get(&self, video_id: &str) -> Option<&FrameMatrix> {
        self.index.get(video_id).map(|&i| &self.videos[i].1)
    }

    pub fn lookup(&self, video_id: &str) -> Result<&FrameMatrix> {
        self.get(video_id).ok_or_else(|| Error::UnknownVideo(video_id.into()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &FrameMatrix)> + '_ {
        self.videos.iter().map(|(k, v)| (k.as_str(), v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn cap(id: &str, video: &str, text: &str) -> Caption {
        Caption { id: id.into(), video_id: video.into(), text: text.into(), noun_phrases: vec![], triples: vec![] }
    }

    #[test]
    fn corpus_groups_by_video() {
        let c = CaptionCorpus::new(vec![cap("a", "v1", "x"), cap("b", "v2", "y"), cap("c", "v1", "z")]).unwrap();
        assert_eq!(c.video_count(), 2);
        assert_eq!(c.caption_ids("v1").unwrap(), ["a", "c"]);
        let total: usize = c.videos().map(|(_, caps)| caps.count()).sum();
        assert_eq!(total, c.len());
    }

    #[test]
    fn corpus_errors() {
        assert_eq!(CaptionCorpus::new(vec![]).unwrap_err(), Error::EmptyCorpus);
        let err = CaptionCorpus::new(vec![cap("a", "v", "x"), cap("a", "v", "y")]).unwrap_err();
        assert_eq!(err, Error::DuplicateId("a".into()));
    }

    #[test]
    fn literal_check_flags_lemmas_only() {
        let mut c = cap("a", "v", "A young boy is playing basketball");
        c.noun_phrases = vec!["young boy".into(), "basketball".into()];
        c.triples = vec![Triple::new("boy", "play", "basketball"), Triple::new("girl", "play", "ball")];
        let corpus = CaptionCorpus::new(vec![c]).unwrap();
        let w = corpus.literal_warnings();
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].fragment, "girl");
    }

    #[test]
    fn bank_validation() {
        let ok = EmbeddingBank::new(vec!["a".into(), "b".into(), "c".into()], 4, vec![0.5; 12]).unwrap();
        assert_eq!(ok.len(), 3);
        assert_eq!(ok.lookup("b").unwrap(), &[0.5; 4]);
        assert_eq!(ok.lookup("z").unwrap_err(), Error::MissingEmbedding("z".into()));

        let err = EmbeddingBank::new(vec!["a".into(), "b".into()], 4, vec![0.5; 12]).unwrap_err();
        assert_eq!(err, Error::RowCountMismatch { rows: 3, keys: 2 });

        let mut data = vec![0.0; 12];
        data[9] = f32::NAN;
        let err = EmbeddingBank::new(vec!["a".into(), "b".into(), "c".into()], 4, data).unwrap_err();
        assert_eq!(err, Error::NonFiniteValue(2));

        let err = EmbeddingBank::new(vec!["a".into(), "a".into()], 1, vec![0.0; 2]).unwrap_err();
        assert_eq!(err, Error::DuplicateKey("a".into()));
    }

    #[test]
    fn store_rules() {
        let mut s = VideoFeatureStore::new(8);
        s.insert("v", FrameMatrix::new(8, vec![0.1; 40]).unwrap()).unwrap();
        assert_eq!(s.get("v").unwrap().frame_count(), 5);
        let dup = s.insert("v", FrameMatrix::new(8, vec![0.1; 8]).unwrap()).unwrap_err();
        assert_eq!(dup, Error::DuplicateVideoId("v".into()));
        let empty = s.insert("w", FrameMatrix::new(8, vec![]).unwrap()).unwrap_err();
        assert_eq!(empty, Error::EmptyVideo("w".into()));
        assert!(matches!(s.lookup("nope"), Err(Error::UnknownVideo(_))));
    }
}
