//! Similarity kernels and retrieval strategies.
//!
//! A video is scored against a text item by averaging the per-frame cosine
//! similarities. Because cosine is linear in the unit-normalized frame, the
//! average equals one dot product between the item and the mean of the
//! unit frames, which is what [`Query`] stores.
//!
//! Every list of [`ScoredItem`] returned from here is ordered by
//! (score desc, key asc).

use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::banks::{CaptionBank, NounPhraseBank, SceneGraphBank};
use crate::corpus::{EmbeddingBank, FrameMatrix};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::taxonomy::{round_count, CategoryModel, CategoryStats, StatsMode};
use crate::vector::norm_sq;

/// Shift added above the minimum when scores carry no positive mass.
pub const TOP_P_SHIFT_EPSILON: f64 = 1e-6;

/// Slack on the cumulative-mass comparison in [`top_p_refine`].
pub const TOP_P_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScoredItem {
    pub key: String,
    pub score: f64,
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub category: Option<String>,
}

fn rank_order(a_score: f64, a_key: &str, b_score: f64, b_key: &str) -> Ordering {
    b_score.total_cmp(&a_score).then_with(|| a_key.cmp(b_key))
}

pub fn sort_scored(items: &mut [ScoredItem]) {
    items.sort_by(|a, b| rank_order(a.score, &a.key, b.score, &b.key));
}

/// A query direction: either the mean unit frame of a video or a unit
/// text vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    direction: Vec<f64>,
}

impl Query {
    /// Mean of the unit-normalized frames. Zero frames contribute nothing,
    /// which makes their cosine 0.
    pub fn from_frames(frames: &FrameMatrix) -> Result<Self> {
        let t = frames.frame_count();
        if t == 0 {
            return Err(Error::EmptyInput);
        }
        let mut direction = alloc::vec![0.0f64; frames.dim()];
        for f in frames.frames() {
            let n = norm_sq(f);
            if n == 0.0 {
                continue;
            }
            let inv = 1.0 / libm::sqrt(n);
            for (d, &x) in direction.iter_mut().zip(f) {
                *d += x as f64 * inv;
            }
        }
        let inv_t = 1.0 / t as f64;
        direction.iter_mut().for_each(|d| *d *= inv_t);
        Ok(Self { direction })
    }

    /// Unit vector along `v`; the zero vector scores 0 against everything.
    pub fn from_vector(v: &[f32]) -> Self {
        let n = norm_sq(v);
        let inv = if n == 0.0 { 0.0 } else { 1.0 / libm::sqrt(n) };
        Self { direction: v.iter().map(|&x| x as f64 * inv).collect() }
    }

    pub fn dim(&self) -> usize {
        self.direction.len()
    }

    fn raw_dot(&self, item: &[f32]) -> f64 {
        self.direction.iter().zip(item).map(|(&d, &x)| d * x as f64).sum()
    }

    /// Mean frame cosine (or plain cosine for a text query) against `item`.
    pub fn similarity(&self, item: &[f32]) -> Result<f64> {
        if item.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: item.len() });
        }
        let n = norm_sq(item);
        if n == 0.0 {
            return Ok(0.0);
        }
        Ok(self.raw_dot(item) / libm::sqrt(n))
    }
}

/// `(1/T) Σ_t cos(frame_t, item)`, with the cosine of a zero vector taken
/// as 0.
pub fn video_item_similarity(frames: &FrameMatrix, item: &[f32]) -> Result<f64> {
    Query::from_frames(frames)?.similarity(item)
}

/// Bank items with their raw embeddings and optional category, prepared
/// for repeated scoring.
#[derive(Debug, Clone)]
pub struct RetrievalBank {
    keys: Vec<String>,
    categories: Vec<Option<usize>>,
    category_names: Vec<String>,
    dim: usize,
    vectors: Vec<f32>,
    inv_norms: Vec<f64>,
}

impl RetrievalBank {
    pub fn new(keys: Vec<String>, categories: Vec<Option<usize>>, category_names: Vec<String>, embeddings: &EmbeddingBank) -> Result<Self> {
        debug_assert_eq!(keys.len(), categories.len());
        let dim = embeddings.dim();
        let mut vectors = Vec::with_capacity(keys.len() * dim);
        let mut inv_norms = Vec::with_capacity(keys.len());
        for k in &keys {
            let v = embeddings.lookup(k)?;
            let n = norm_sq(v);
            inv_norms.push(if n == 0.0 { 0.0 } else { 1.0 / libm::sqrt(n) });
            vectors.extend_from_slice(v);
        }
        if categories.iter().flatten().any(|&c| c >= category_names.len()) {
            return Err(Error::CategoryMismatch);
        }
        Ok(Self { keys, categories, category_names, dim, vectors, inv_norms })
    }

    pub fn uncategorized(keys: Vec<String>, embeddings: &EmbeddingBank) -> Result<Self> {
        let n = keys.len();
        Self::new(keys, alloc::vec![None; n], Vec::new(), embeddings)
    }

    /// Noun-phrase bank with the categories of `model`.
    pub fn for_noun_phrases(bank: &NounPhraseBank, model: &CategoryModel, embeddings: &EmbeddingBank) -> Result<Self> {
        let keys: Vec<String> = bank.phrases().map(String::from).collect();
        let categories = keys.iter().map(|k| model.np_category(k)).collect();
        Self::new(keys, categories, model.categories.clone(), embeddings)
    }

    /// Scene-graph bank with pair categories in the model's pair layout.
    pub fn for_scene_graphs(bank: &SceneGraphBank, model: &CategoryModel, embeddings: &EmbeddingBank) -> Result<Self> {
        let layout = model.pair_layout();
        let keys: Vec<String> = bank.keys().collect();
        let categories = keys.iter().map(|k| model.sg_category(k, &layout)).collect();
        Self::new(keys, categories, model.pair_names(), embeddings)
    }

    /// Caption bank keyed by caption id.
    pub fn for_captions(bank: &CaptionBank, embeddings: &EmbeddingBank) -> Result<Self> {
        Self::uncategorized(bank.entries.iter().map(|e| e.id.clone()).collect(), embeddings)
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

    pub fn category_names(&self) -> &[String] {
        &self.category_names
    }

    pub fn category(&self, i: usize) -> Option<usize> {
        self.categories[i]
    }

    pub fn vector(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn position(&self, key: &str) -> Option<usize> {
        self.keys.iter().position(|k| k == key)
    }

    /// Similarity of every item to the query, in bank order.
    pub fn scores(&self, query: &Query) -> Result<Vec<f64>> {
        if query.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: query.dim() });
        }
        Ok(self
            .vectors
            .chunks_exact(self.dim)
            .zip(&self.inv_norms)
            .map(|(v, &inv)| if inv == 0.0 { 0.0 } else { query.raw_dot(v) * inv })
            .collect())
    }

    fn item(&self, i: usize, score: f64) -> ScoredItem {
        ScoredItem {
            key: self.keys[i].clone(),
            score,
            category: self.categories[i].map(|c| self.category_names[c].clone()),
        }
    }

    fn ranked_indices(&self, scores: &[f64]) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| rank_order(scores[a], &self.keys[a], scores[b], &self.keys[b]));
        idx
    }

    /// Ranked item indices of every category, in category order.
    fn ranked_by_category(&self, scores: &[f64]) -> Vec<Vec<usize>> {
        let mut per = alloc::vec![Vec::new(); self.category_names.len()];
        for i in self.ranked_indices(scores) {
            if let Some(c) = self.categories[i] {
                per[c].push(i);
            }
        }
        per
    }

    fn check_layout(&self, stats: &CategoryStats) -> Result<()> {
        let names = stats.names();
        if names.len() != self.category_names.len() || names.iter().zip(&self.category_names).any(|(a, b)| *a != b.as_str()) {
            return Err(Error::CategoryMismatch);
        }
        Ok(())
    }
}

/// The `k` best items of the whole bank.
pub fn direct_top_k(query: &Query, bank: &RetrievalBank, k: usize) -> Result<Vec<ScoredItem>> {
    if k == 0 {
        return Err(Error::InvalidParameter("K must be at least 1"));
    }
    if bank.is_empty() {
        return Err(Error::EmptyBank);
    }
    let scores = bank.scores(query)?;
    Ok(bank.ranked_indices(&scores).into_iter().take(k).map(|i| bank.item(i, scores[i])).collect())
}

/// How the in-domain occurrence probability gates retrieved items.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Retention {
    /// One draw per category keeps or drops its whole batch.
    #[default]
    PerCategory,
    /// One draw per retrieved item.
    PerItem,
}

/// In-domain category-aware retrieval.
///
/// For every category, in layout order, the top `round(mean)` items are
/// taken and kept with the category's occurrence probability. Under
/// [`Retention::PerCategory`] exactly one uniform draw is consumed per
/// category, empty or not, so each category's fate depends only on the seed
/// and its position.
pub fn retrieve_in_domain(query: &Query, bank: &RetrievalBank, stats: &CategoryStats, seed: u64, retention: Retention) -> Result<Vec<ScoredItem>> {
    let CategoryStats::InDomain(stats) = stats else {
        return Err(Error::StatsModeMismatch { expected: StatsMode::InDomain.as_str(), found: stats.mode().as_str() });
    };
    bank.check_layout(&CategoryStats::InDomain(stats.clone()))?;
    let scores = bank.scores(query)?;
    let mut rng = SplitMix64::new(seed);
    let mut out = Vec::new();
    for (ranked, cat) in bank.ranked_by_category(&scores).into_iter().zip(&stats.categories) {
        let take = round_count(cat.mean) as usize;
        let batch = ranked.into_iter().take(take);
        match retention {
            Retention::PerCategory => {
                if rng.next_f64() < cat.probability {
                    out.extend(batch.map(|i| bank.item(i, scores[i])));
                }
            }
            Retention::PerItem => {
                for i in batch {
                    if rng.next_f64() < cat.probability {
                        out.push(bank.item(i, scores[i]));
                    }
                }
            }
        }
    }
    sort_scored(&mut out);
    Ok(out)
}

/// Cross-domain retrieval: the top `quota` items of every category.
pub fn retrieve_cross_domain(query: &Query, bank: &RetrievalBank, stats: &CategoryStats) -> Result<Vec<ScoredItem>> {
    let CategoryStats::CrossDomain(cross) = stats else {
        return Err(Error::StatsModeMismatch { expected: StatsMode::CrossDomain.as_str(), found: stats.mode().as_str() });
    };
    bank.check_layout(stats)?;
    let scores = bank.scores(query)?;
    let mut out = Vec::new();
    for (ranked, cat) in bank.ranked_by_category(&scores).into_iter().zip(&cross.categories) {
        out.extend(ranked.into_iter().take(cat.quota as usize).map(|i| bank.item(i, scores[i])));
    }
    sort_scored(&mut out);
    Ok(out)
}

/// Turns scores into a distribution by dividing by their sum. When any
/// score is negative or the total is not positive, scores are first shifted
/// so the minimum becomes [`TOP_P_SHIFT_EPSILON`].
pub fn normalized_mass(scores: &[f64]) -> Vec<f64> {
    let total: f64 = scores.iter().sum();
    let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
    if total > 0.0 && min >= 0.0 {
        return scores.iter().map(|s| s / total).collect();
    }
    let shifted: Vec<f64> = scores.iter().map(|s| s - min + TOP_P_SHIFT_EPSILON).collect();
    let total: f64 = shifted.iter().sum();
    shifted.into_iter().map(|s| s / total).collect()
}

/// Keeps the shortest highest-scoring prefix whose normalized mass reaches
/// `tau`. `tau >= 1` keeps everything.
pub fn top_p_refine(items: &[ScoredItem], tau: f64) -> Result<Vec<ScoredItem>> {
    if items.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::InvalidParameter("tau must lie in (0, 1]"));
    }
    let mut sorted = items.to_vec();
    sort_scored(&mut sorted);
    if tau >= 1.0 {
        return Ok(sorted);
    }
    let scores: Vec<f64> = sorted.iter().map(|i| i.score).collect();
    let mass = normalized_mass(&scores);
    let mut cumulative = 0.0;
    let mut keep = sorted.len();
    for (i, m) in mass.iter().enumerate() {
        cumulative += m;
        if cumulative >= tau - TOP_P_TOLERANCE {
            keep = i + 1;
            break;
        }
    }
    sorted.truncate(keep);
    Ok(sorted)
}

/// Softmax-weighted mixture of caption embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct EcPrompt {
    pub vector: Vec<f32>,
    /// Weight of every caption, in bank order.
    pub weights: Vec<f64>,
}

impl EcPrompt {
    /// The `n` heaviest captions as `(bank index, weight)`.
    pub fn top_weights(&self, n: usize) -> Vec<(usize, f64)> {
        let mut idx: Vec<(usize, f64)> = self.weights.iter().copied().enumerate().collect();
        idx.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        idx.truncate(n);
        idx
    }
}

/// `e_c = Σ_i softmax(s / temperature)_i · e(S_i)`.
pub fn ec_weighted_embedding(query: &Query, bank: &RetrievalBank, temperature: f64) -> Result<EcPrompt> {
    if bank.is_empty() {
        return Err(Error::EmptyBank);
    }
    if !temperature.is_finite() || temperature <= 0.0 {
        return Err(Error::InvalidParameter("temperature must be positive"));
    }
    let scores = bank.scores(query)?;
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| libm::exp((s - max) / temperature)).collect();
    let total: f64 = exps.iter().sum();
    let weights: Vec<f64> = exps.iter().map(|e| e / total).collect();
    let mut acc = alloc::vec![0.0f64; bank.dim()];
    for (i, &w) in weights.iter().enumerate() {
        for (a, &x) in acc.iter_mut().zip(bank.vector(i)) {
            *a += w * x as f64;
        }
    }
    Ok(EcPrompt { vector: acc.into_iter().map(|x| x as f32).collect(), weights })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taxonomy::{CrossDomainCategory, CrossDomainStats, InDomainCategory, InDomainStats};
    use alloc::string::ToString;
    use alloc::vec;

    fn frames(rows: &[&[f32]]) -> FrameMatrix {
        let dim = rows[0].len();
        FrameMatrix::new(dim, rows.iter().flat_map(|r| r.iter().copied()).collect()).unwrap()
    }

    #[test]
    fn identical_frames_score_one() {
        let item = [0.2f32, 0.4, 0.4];
        let f = frames(&[&item, &item, &item]);
        assert!((video_item_similarity(&f, &item).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mean_of_frame_cosines() {
        // cos([1,0],[0.2, √0.96]) = 0.2 and cos([1,0],[0.6,0.8]) = 0.6
        let f = frames(&[&[0.2, libm::sqrtf(0.96)], &[0.6, 0.8]]);
        let s = video_item_similarity(&f, &[1.0, 0.0]).unwrap();
        assert!((s - 0.4).abs() < 1e-7, "{s}");
    }

    #[test]
    fn zero_item_and_dimension_mismatch() {
        let f = frames(&[&[1.0, 2.0]]);
        assert_eq!(video_item_similarity(&f, &[0.0, 0.0]).unwrap(), 0.0);
        assert!(matches!(video_item_similarity(&f, &[1.0]), Err(Error::DimensionMismatch { .. })));
    }

    fn toy_bank() -> RetrievalBank {
        // Two categories along separate axes; scores against [1, 0, 0]
        // decrease down the list within each category.
        let rows: [(&str, [f32; 3], usize); 5] = [
            ("p1", [0.9, 0.1, 0.0], 0),
            ("p2", [0.7, 0.3, 0.0], 0),
            ("p3", [0.5, 0.5, 0.0], 0),
            ("o1", [0.8, 0.0, 0.2], 1),
            ("o2", [0.1, 0.0, 0.9], 1),
        ];
        let emb = EmbeddingBank::from_rows(3, rows.iter().map(|(k, v, _)| (k.to_string(), v.to_vec()))).unwrap();
        RetrievalBank::new(
            rows.iter().map(|r| r.0.to_string()).collect(),
            rows.iter().map(|r| Some(r.2)).collect(),
            vec!["P".to_string(), "O".to_string()],
            &emb,
        )
        .unwrap()
    }

    fn keys(items: &[ScoredItem]) -> Vec<&str> {
        items.iter().map(|i| i.key.as_str()).collect()
    }

    #[test]
    fn direct_matches_exhaustive_sort() {
        let bank = toy_bank();
        let q = Query::from_vector(&[1.0, 0.0, 0.0]);
        let all = direct_top_k(&q, &bank, 10).unwrap();
        assert_eq!(all.len(), 5);
        let mut oracle: Vec<(f64, &str)> = bank.keys().iter().map(|k| {
            let v = bank.vector(bank.position(k).unwrap());
            (crate::vector::cosine(&[1.0, 0.0, 0.0], v), k.as_str())
        }).collect();
        oracle.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(b.1)));
        assert_eq!(keys(&all), oracle.iter().map(|o| o.1).collect::<Vec<_>>());
        assert_eq!(keys(&direct_top_k(&q, &bank, 2).unwrap()), ["p1", "o1"]);
    }

    fn in_domain(mean: [f64; 2], prob: [f64; 2]) -> CategoryStats {
        CategoryStats::InDomain(InDomainStats {
            video_total: 2,
            categories: ["P", "O"]
                .iter()
                .zip(mean.iter().zip(prob))
                .map(|(n, (&m, p))| InDomainCategory { name: n.to_string(), video_count: 1, unit_count: 1, probability: p, mean: m })
                .collect(),
        })
    }

    #[test]
    fn in_domain_certain_retention() {
        let bank = toy_bank();
        let q = Query::from_vector(&[1.0, 0.0, 0.0]);
        let y = retrieve_in_domain(&q, &bank, &in_domain([2.0, 1.0], [1.0, 1.0]), 0, Retention::PerCategory).unwrap();
        assert_eq!(keys(&y), ["p1", "o1", "p2"]);
        assert_eq!(y[1].category.as_deref(), Some("O"));
        let none = retrieve_in_domain(&q, &bank, &in_domain([2.0, 1.0], [1.0, 0.0]), 0, Retention::PerCategory).unwrap();
        assert_eq!(keys(&none), ["p1", "p2"]);
        // round(2.5) = 3 caps at category size
        let capped = retrieve_in_domain(&q, &bank, &in_domain([9.6, 0.0], [1.0, 1.0]), 0, Retention::PerItem).unwrap();
        assert_eq!(capped.len(), 3);
    }

    #[test]
    fn in_domain_trace_follows_generator() {
        let bank = toy_bank();
        let q = Query::from_vector(&[1.0, 0.0, 0.0]);
        for seed in 0..50u64 {
            let y = retrieve_in_domain(&q, &bank, &in_domain([2.0, 1.0], [1.0, 0.5]), seed, Retention::PerCategory).unwrap();
            let mut rng = SplitMix64::new(seed);
            let _first = rng.next_f64();
            let keep_second = rng.next_f64() < 0.5;
            assert_eq!(y.iter().any(|i| i.key == "o1"), keep_second);
        }
    }

    #[test]
    fn mode_mismatch() {
        let bank = toy_bank();
        let q = Query::from_vector(&[1.0, 0.0, 0.0]);
        let cross = CategoryStats::CrossDomain(CrossDomainStats {
            base_count: 1,
            base_retrieval: 1,
            categories: vec![
                CrossDomainCategory { name: "P".into(), instance_count: 2, quota: 2 },
                CrossDomainCategory { name: "O".into(), instance_count: 1, quota: 5 },
            ],
        });
        assert!(matches!(retrieve_in_domain(&q, &bank, &cross, 0, Retention::PerCategory), Err(Error::StatsModeMismatch { .. })));
        let y = retrieve_cross_domain(&q, &bank, &cross).unwrap();
        assert_eq!(keys(&y), ["p1", "o1", "p2", "o2"]);
        assert!(matches!(retrieve_cross_domain(&q, &bank, &in_domain([1.0, 1.0], [1.0, 1.0])), Err(Error::StatsModeMismatch { .. })));
    }

    fn scored(scores: &[f64]) -> Vec<ScoredItem> {
        scores.iter().enumerate().map(|(i, &s)| ScoredItem { key: alloc::format!("k{i}"), score: s, category: None }).collect()
    }

    #[test]
    fn top_p_examples() {
        let y = scored(&[0.5, 0.3, 0.2]);
        assert_eq!(top_p_refine(&y, 0.6).unwrap().len(), 2);
        assert_eq!(top_p_refine(&y, 0.5).unwrap().len(), 1);
        assert_eq!(top_p_refine(&y, 0.8).unwrap().len(), 2);
        assert_eq!(top_p_refine(&y, 1.0).unwrap().len(), 3);
        let with_zero = scored(&[0.5, 0.0]);
        assert_eq!(top_p_refine(&with_zero, 1.0).unwrap().len(), 2);
        assert_eq!(top_p_refine(&[], 0.5).unwrap_err(), Error::EmptyInput);
        assert!(top_p_refine(&y, 0.0).is_err());
    }

    #[test]
    fn top_p_non_positive_scores() {
        let y = scored(&[-0.1, -0.5, -0.2]);
        let out = top_p_refine(&y, 0.6).unwrap();
        assert_eq!(out[0].key, "k0");
        assert!(!out.is_empty());
    }

    #[test]
    fn ec_single_and_symmetric() {
        let emb = EmbeddingBank::from_rows(2, [("a", vec![0.3f32, 0.9]), ("b", vec![0.9, 0.3])]).unwrap();
        let one = RetrievalBank::uncategorized(vec!["a".into()], &emb).unwrap();
        let q = Query::from_vector(&[1.0, 0.0]);
        for t in [0.01, 1.0, 50.0] {
            assert_eq!(ec_weighted_embedding(&q, &one, t).unwrap().vector, [0.3, 0.9]);
        }
        let two = RetrievalBank::uncategorized(vec!["a".into(), "b".into()], &emb).unwrap();
        let diag = Query::from_vector(&[1.0, 1.0]);
        let e = ec_weighted_embedding(&diag, &two, 1.0).unwrap();
        assert!((e.vector[0] - 0.6).abs() < 1e-6 && (e.vector[1] - 0.6).abs() < 1e-6);
        assert!((e.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(ec_weighted_embedding(&q, &two, 0.0).is_err());
    }
}
