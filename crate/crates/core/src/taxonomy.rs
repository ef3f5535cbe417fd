//! Category assignment and statistical priors.
//!
//! Noun phrases are categorized from an ingested category file. Scene-graph
//! triples get the pair (subject category, object category); endpoints that
//! are not bank phrases borrow the category of their nearest bank phrase in
//! sentence-embedding space.
//!
//! Two kinds of priors are computed over a category layout:
//!
//! - in-domain: per category, the fraction of videos mentioning it
//!   (`probability`) and the mean number of distinct category units per such
//!   video (`mean`);
//! - cross-domain: per category, the number of unit instances in the
//!   corpus, and a retrieval quota `round(count / base * B)` where `base` is
//!   the smallest non-zero count.
//!
//! The two modes count different things under similar names, so they are
//! kept in separate types.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::banks::{EnhancedTriple, NounPhraseBank, SceneGraphBank};
use crate::corpus::{CaptionCorpus, EmbeddingBank};
use crate::error::{Error, Result};
use crate::text::normalize;
use crate::vector::cosine;

/// The eight default noun-phrase categories.
pub const DEFAULT_TAXONOMY: [&str; 8] = [
    "Video Overall Description",
    "Abstract Noun Phrases",
    "Plural People",
    "Personal Pronouns",
    "Object Noun Phrases",
    "Place Noun Phrases",
    "Singular People",
    "Quantifiers & Others",
];

/// Rounds half away from zero. Every count derived from a real-valued
/// prior goes through here.
pub fn round_count(x: f64) -> u64 {
    if x <= 0.0 {
        0
    } else {
        libm::round(x) as u64
    }
}

/// Contents of a category file: the ordered taxonomy and, per category,
/// the phrases assigned to it.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CategoryFile {
    pub taxonomy: Vec<String>,
    pub assignments: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CategoryPair {
    pub subject: usize,
    pub object: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CategoryModel {
    pub categories: Vec<String>,
    /// Normalized bank phrase → category index.
    pub np_assignment: BTreeMap<String, usize>,
    /// Triple key-string → (subject, object) category pair.
    pub sg_assignment: BTreeMap<String, CategoryPair>,
}

/// Result of [`assign_categories`].
#[derive(Debug, Clone)]
pub struct Assignment {
    pub model: CategoryModel,
    /// File phrases that are not in the bank, normalized and sorted.
    pub ignored: Vec<String>,
}

impl CategoryModel {
    pub fn category_index(&self, name: &str) -> Option<usize> {
        self.categories.iter().position(|c| c == name)
    }

    pub fn np_category(&self, phrase: &str) -> Option<usize> {
        self.np_assignment.get(phrase).copied()
    }

    /// Distinct category pairs present in the scene-graph assignment,
    /// ordered by (subject index, object index).
    pub fn pair_layout(&self) -> Vec<CategoryPair> {
        let set: BTreeSet<CategoryPair> = self.sg_assignment.values().copied().collect();
        set.into_iter().collect()
    }

    pub fn pair_label(&self, pair: CategoryPair) -> String {
        format!("{}_pred_{}", self.categories[pair.subject], self.categories[pair.object])
    }

    /// Pair labels in [`pair_layout`](Self::pair_layout) order.
    pub fn pair_names(&self) -> Vec<String> {
        self.pair_layout().into_iter().map(|p| self.pair_label(p)).collect()
    }

    /// Pair-category index of a triple key within the pair layout.
    pub fn sg_category(&self, key: &str, layout: &[CategoryPair]) -> Option<usize> {
        let pair = self.sg_assignment.get(key)?;
        layout.binary_search(pair).ok()
    }
}

/// Assigns every bank phrase the category the file gives it.
pub fn assign_categories(bank: &NounPhraseBank, file: &CategoryFile) -> Result<Assignment> {
    if file.taxonomy.is_empty() {
        return Err(Error::InvalidParameter("taxonomy has no categories"));
    }
    let mut lookup: BTreeMap<String, usize> = BTreeMap::new();
    for (category, phrases) in &file.assignments {
        let idx = file
            .taxonomy
            .iter()
            .position(|c| c == category)
            .ok_or_else(|| Error::UnknownCategory(category.clone()))?;
        for p in phrases {
            let key = normalize(p);
            match lookup.get(&key) {
                Some(&prev) if prev != idx => return Err(Error::ConflictingAssignment(key)),
                _ => {
                    lookup.insert(key, idx);
                }
            }
        }
    }
    let mut np_assignment = BTreeMap::new();
    for phrase in bank.phrases() {
        let idx = *lookup.get(phrase).ok_or_else(|| Error::UncategorizedPhrase(phrase.into()))?;
        np_assignment.insert(String::from(phrase), idx);
    }
    let ignored = lookup.keys().filter(|k| !np_assignment.contains_key(*k)).cloned().collect();
    Ok(Assignment {
        model: CategoryModel { categories: file.taxonomy.clone(), np_assignment, sg_assignment: BTreeMap::new() },
        ignored,
    })
}

/// Category of the bank phrase closest to `phrase` by sentence-embedding
/// cosine. Bank phrases resolve to their own category; ties go to the
/// lexicographically smallest neighbour.
pub fn assign_nearest_category(phrase: &str, bge: &EmbeddingBank, model: &CategoryModel) -> Result<usize> {
    if let Some(c) = model.np_category(phrase) {
        return Ok(c);
    }
    let query = bge.lookup(phrase)?;
    let mut best: Option<(f64, usize)> = None;
    // np_assignment iterates in ascending phrase order, so a strict `>`
    // keeps the smallest phrase among equal scores.
    for (neighbour, &category) in &model.np_assignment {
        let score = cosine(query, bge.lookup(neighbour)?);
        if best.is_none_or(|(s, _)| score > s) {
            best = Some((score, category));
        }
    }
    best.map(|(_, c)| c).ok_or(Error::EmptyBank)
}

/// Assigns a category pair to every scene-graph bank entry.
pub fn categorize_scene_graphs(model: &mut CategoryModel, bank: &SceneGraphBank, bge: &EmbeddingBank) -> Result<()> {
    let mut resolved: BTreeMap<String, usize> = BTreeMap::new();
    let mut sg_assignment = BTreeMap::new();
    for entry in &bank.entries {
        let mut category_of = |endpoint: &str| -> Result<usize> {
            if let Some(&c) = resolved.get(endpoint) {
                return Ok(c);
            }
            let c = assign_nearest_category(endpoint, bge, model)?;
            resolved.insert(String::from(endpoint), c);
            Ok(c)
        };
        let subject = category_of(&entry.triple.subject)?;
        let object = category_of(&entry.triple.object)?;
        sg_assignment.insert(entry.key(), CategoryPair { subject, object });
    }
    model.sg_assignment = sg_assignment;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum StatsMode {
    InDomain,
    CrossDomain,
}

impl StatsMode {
    pub fn as_str(self) -> &'static str {
        match self {
            StatsMode::InDomain => "in_domain",
            StatsMode::CrossDomain => "cross_domain",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct InDomainCategory {
    pub name: String,
    /// Videos with at least one unit of this category.
    pub video_count: u64,
    /// Distinct units of this category summed over those videos.
    pub unit_count: u64,
    pub probability: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct InDomainStats {
    pub video_total: u64,
    pub categories: Vec<InDomainCategory>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CrossDomainCategory {
    pub name: String,
    /// Unit instances of this category in the corpus.
    pub instance_count: u64,
    pub quota: u64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CrossDomainStats {
    /// Smallest non-zero instance count.
    pub base_count: u64,
    /// Quota of the base category (`B`).
    pub base_retrieval: u64,
    pub categories: Vec<CrossDomainCategory>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "mode", rename_all = "snake_case"))]
pub enum CategoryStats {
    InDomain(InDomainStats),
    CrossDomain(CrossDomainStats),
}

impl CategoryStats {
    pub fn mode(&self) -> StatsMode {
        match self {
            CategoryStats::InDomain(_) => StatsMode::InDomain,
            CategoryStats::CrossDomain(_) => StatsMode::CrossDomain,
        }
    }

    pub fn names(&self) -> Vec<&str> {
        match self {
            CategoryStats::InDomain(s) => s.categories.iter().map(|c| c.name.as_str()).collect(),
            CategoryStats::CrossDomain(s) => s.categories.iter().map(|c| c.name.as_str()).collect(),
        }
    }
}

/// In-domain priors from per-video unit sets.
///
/// `videos` yields, for every training video, its deduplicated unit keys;
/// units without a category are skipped.
pub fn in_domain_from_units<'a, V, F>(names: Vec<String>, videos: V, category_of: F) -> Result<InDomainStats>
where
    V: IntoIterator<Item = BTreeSet<&'a str>>,
    F: Fn(&str) -> Option<usize>,
{
    let k = names.len();
    let mut video_count = alloc::vec![0u64; k];
    let mut unit_count = alloc::vec![0u64; k];
    let mut video_total = 0u64;
    let mut per_video = alloc::vec![0u64; k];
    for units in videos {
        video_total += 1;
        per_video.iter_mut().for_each(|c| *c = 0);
        for u in units {
            if let Some(c) = category_of(u) {
                per_video[c] += 1;
            }
        }
        for c in 0..k {
            if per_video[c] > 0 {
                video_count[c] += 1;
                unit_count[c] += per_video[c];
            }
        }
    }
    if video_total == 0 {
        return Err(Error::EmptyCorpus);
    }
    let categories = names
        .into_iter()
        .enumerate()
        .map(|(c, name)| {
            let (probability, mean) = if video_count[c] == 0 {
                (0.0, 0.0)
            } else {
                (video_count[c] as f64 / video_total as f64, unit_count[c] as f64 / video_count[c] as f64)
            };
            InDomainCategory { name, video_count: video_count[c], unit_count: unit_count[c], probability, mean }
        })
        .collect();
    Ok(InDomainStats { video_total, categories })
}

/// Cross-domain quotas from per-category instance counts.
pub fn cross_domain_from_counts(names: Vec<String>, counts: &[u64], base_retrieval: u64) -> Result<CrossDomainStats> {
    if base_retrieval == 0 {
        return Err(Error::InvalidParameter("B must be at least 1"));
    }
    debug_assert_eq!(names.len(), counts.len());
    let base_count = counts.iter().copied().filter(|&n| n > 0).min().ok_or(Error::AllCategoriesEmpty)?;
    let categories = names
        .into_iter()
        .zip(counts)
        .map(|(name, &n)| {
            let quota = if n == 0 { 0 } else { round_count((n as f64 * base_retrieval as f64) / base_count as f64) };
            CrossDomainCategory { name, instance_count: n, quota }
        })
        .collect();
    Ok(CrossDomainStats { base_count, base_retrieval, categories })
}

fn video_phrase_sets(corpus: &CaptionCorpus) -> Vec<BTreeSet<String>> {
    corpus
        .videos()
        .map(|(_, caps)| caps.flat_map(|c| c.phrase_set()).collect())
        .collect()
}

/// Noun-phrase in-domain priors.
pub fn compute_in_domain_stats(corpus: &CaptionCorpus, model: &CategoryModel) -> Result<InDomainStats> {
    let sets = video_phrase_sets(corpus);
    in_domain_from_units(
        model.categories.clone(),
        sets.iter().map(|s| s.iter().map(String::as_str).collect()),
        |p| model.np_category(p),
    )
}

/// Noun-phrase cross-domain quotas. A phrase instance counts once per
/// caption, matching the bank frequencies.
pub fn compute_cross_domain_quotas(corpus: &CaptionCorpus, model: &CategoryModel, base_retrieval: u64) -> Result<CrossDomainStats> {
    let mut counts = alloc::vec![0u64; model.categories.len()];
    for c in corpus.captions() {
        for p in c.phrase_set() {
            if let Some(k) = model.np_category(&p) {
                counts[k] += 1;
            }
        }
    }
    cross_domain_from_counts(model.categories.clone(), &counts, base_retrieval)
}

/// Scene-graph in-domain priors over category pairs. Each video's unit set
/// is the deduplicated set of triples selected from its captions.
pub fn compute_sg_in_domain_stats(corpus: &CaptionCorpus, selections: &[EnhancedTriple], model: &CategoryModel) -> Result<InDomainStats> {
    let layout = model.pair_layout();
    let mut per_caption: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    for s in selections {
        per_caption.entry(s.source_caption_id.as_str()).or_default().push(s.triple.key());
    }
    let sets: Vec<BTreeSet<&str>> = corpus
        .videos()
        .map(|(_, caps)| {
            caps.filter_map(|c| per_caption.get(c.id.as_str()))
                .flat_map(|keys| keys.iter().map(String::as_str))
                .collect()
        })
        .collect();
    in_domain_from_units(model.pair_names(), sets, |k| model.sg_category(k, &layout))
}

/// Scene-graph cross-domain quotas over category pairs; the base is the
/// smallest non-zero pair count.
pub fn compute_sg_cross_domain_quotas(selections: &[EnhancedTriple], model: &CategoryModel, base_retrieval: u64) -> Result<CrossDomainStats> {
    let layout = model.pair_layout();
    let mut counts = alloc::vec![0u64; layout.len()];
    for s in selections {
        if let Some(k) = model.sg_category(&s.triple.key(), &layout) {
            counts[k] += 1;
        }
    }
    cross_domain_from_counts(model.pair_names(), &counts, base_retrieval)
}
