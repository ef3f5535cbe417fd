//! Training and inference prompt bundles.
//!
//! A bundle is an ordered sequence of pre-projection vectors: noun-phrase
//! slots, then scene-graph slots, then exactly one entire-caption vector.
//! Projection into the decoder's space is the decoder's concern.

use alloc::string::String;
use alloc::vec::Vec;

use crate::banks::CaptionBank;
use crate::corpus::{EmbeddingBank, VideoFeatureStore};
use crate::error::{Error, Result};
use crate::retrieval::{
    direct_top_k, ec_weighted_embedding, retrieve_cross_domain, retrieve_in_domain, top_p_refine, EcPrompt, Query, Retention,
    RetrievalBank, ScoredItem,
};
use crate::rng::{derive_seed, derive_seed_for, SplitMix64};
use crate::taxonomy::{CategoryStats, StatsMode};

/// Neighbor-pool rule recorded in export manifests.
pub const NEIGHBOR_POOL_POLICY: &str = "exclude_source_when_text_duplicated_else_include_source";

const NP_STREAM: u64 = 1;
const SG_STREAM: u64 = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct Slot {
    pub key: String,
    pub score: f64,
    pub vector: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptBundle {
    pub np_slots: Vec<Slot>,
    pub sg_slots: Vec<Slot>,
    pub ec_slot: Vec<f32>,
    /// Present for training bundles only.
    pub target_text: Option<String>,
    pub provenance: Option<String>,
}

impl PromptBundle {
    /// All slot vectors in concatenation order: noun phrases, scene graphs,
    /// entire caption.
    pub fn sequence(&self) -> impl Iterator<Item = &[f32]> + '_ {
        self.np_slots
            .iter()
            .chain(&self.sg_slots)
            .map(|s| s.vector.as_slice())
            .chain(core::iter::once(self.ec_slot.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.np_slots.len() + self.sg_slots.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedEmbedding {
    pub vector: Vec<f32>,
    pub source_caption_id: String,
    pub sampled_neighbor_id: String,
    pub noise_variance: f64,
}

/// Caption-to-caption nearest neighbors over the entire-caption bank.
#[derive(Debug, Clone)]
pub struct NeighborIndex {
    bank: RetrievalBank,
    texts: Vec<String>,
}

impl NeighborIndex {
    /// `embeddings` is keyed by caption id.
    pub fn new(captions: &CaptionBank, embeddings: &EmbeddingBank) -> Result<Self> {
        let bank = RetrievalBank::for_captions(captions, embeddings)?;
        let texts = captions.entries.iter().map(|e| e.text.clone()).collect();
        Ok(Self { bank, texts })
    }

    pub fn len(&self) -> usize {
        self.bank.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bank.is_empty()
    }

    pub fn text(&self, i: usize) -> &str {
        &self.texts[i]
    }

    pub fn id(&self, i: usize) -> &str {
        &self.bank.keys()[i]
    }

    /// The `m` nearest captions to `caption_id` as `(index, cosine)`, ordered
    /// by (cosine desc, index asc). The source itself is in the pool unless
    /// another caption carries identical text.
    pub fn nearest(&self, caption_id: &str, m: usize) -> Result<Vec<(usize, f64)>> {
        let source = self.bank.position(caption_id).ok_or_else(|| Error::UnknownCaption(caption_id.into()))?;
        let scores = self.bank.scores(&Query::from_vector(self.bank.vector(source)))?;
        let text = &self.texts[source];
        let duplicated = self.texts.iter().enumerate().any(|(i, t)| i != source && t == text);
        let mut pool: Vec<(usize, f64)> =
            scores.into_iter().enumerate().filter(|&(i, _)| !(duplicated && i == source)).collect();
        pool.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        pool.truncate(m);
        Ok(pool)
    }

    /// `ẽ = e(S_r) + ε`: `S_r` drawn uniformly from the `m` nearest
    /// captions and `ε_i ~ Normal(0, lambda_sq)`. The generator is seeded
    /// per caption id, so results do not depend on processing order.
    pub fn augment(&self, caption_id: &str, m: usize, lambda_sq: f64, seed: u64) -> Result<AugmentedEmbedding> {
        if m == 0 {
            return Err(Error::InvalidParameter("M must be at least 1"));
        }
        if !lambda_sq.is_finite() || lambda_sq < 0.0 {
            return Err(Error::InvalidParameter("noise variance must be finite and non-negative"));
        }
        let pool = self.nearest(caption_id, m)?;
        if pool.is_empty() {
            return Err(Error::EmptyBank);
        }
        let mut rng = SplitMix64::new(derive_seed_for(seed, caption_id));
        let picked = pool[rng.next_index(pool.len())].0;
        let sd = libm::sqrt(lambda_sq);
        let vector = self
            .bank
            .vector(picked)
            .iter()
            .map(|&x| if sd == 0.0 { x } else { (x as f64 + sd * rng.next_normal()) as f32 })
            .collect();
        Ok(AugmentedEmbedding {
            vector,
            source_caption_id: caption_id.into(),
            sampled_neighbor_id: self.id(picked).into(),
            noise_variance: lambda_sq,
        })
    }
}

fn slots(items: &[ScoredItem], bank: &RetrievalBank) -> Vec<Slot> {
    items
        .iter()
        .map(|item| {
            let i = bank.position(&item.key).expect("retrieved key belongs to its bank");
            Slot { key: item.key.clone(), score: item.score, vector: bank.vector(i).to_vec() }
        })
        .collect()
}

/// Top-`k_np` phrases and top-`k_sg` triples by cosine to the perturbed
/// embedding, which itself fills the entire-caption slot.
pub fn build_training_prompt(
    aug: &AugmentedEmbedding,
    target_text: &str,
    np_bank: &RetrievalBank,
    sg_bank: &RetrievalBank,
    k_np: usize,
    k_sg: usize,
) -> Result<PromptBundle> {
    let query = Query::from_vector(&aug.vector);
    let np = direct_top_k(&query, np_bank, k_np)?;
    let sg = direct_top_k(&query, sg_bank, k_sg)?;
    Ok(PromptBundle {
        np_slots: slots(&np, np_bank),
        sg_slots: slots(&sg, sg_bank),
        ec_slot: aug.vector.clone(),
        target_text: Some(target_text.into()),
        provenance: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum RetrievalMode {
    #[default]
    InDomain,
    CrossDomain,
    DirectTopK,
}

impl RetrievalMode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::InDomain => "in_domain",
            Self::CrossDomain => "cross_domain",
            Self::DirectTopK => "direct_top_k",
        }
    }

    /// Stats mode this retrieval mode consumes, if any.
    pub fn stats_mode(self) -> Option<StatsMode> {
        match self {
            Self::InDomain => Some(StatsMode::InDomain),
            Self::CrossDomain => Some(StatsMode::CrossDomain),
            Self::DirectTopK => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceConfig {
    pub mode: RetrievalMode,
    pub tau: f64,
    /// Budget of the direct mode, per bank.
    pub k_np: usize,
    pub k_sg: usize,
    pub temperature: f64,
    pub seed: u64,
    pub retention: Retention,
}

/// Banks and priors shared by every inference query.
#[derive(Debug, Clone, Copy)]
pub struct InferenceBanks<'a> {
    pub np: &'a RetrievalBank,
    pub sg: &'a RetrievalBank,
    pub ec: &'a RetrievalBank,
    pub np_stats: Option<&'a CategoryStats>,
    pub sg_stats: Option<&'a CategoryStats>,
}

/// Refined retrieval sets and the entire-caption mixture for one video.
#[derive(Debug, Clone, PartialEq)]
pub struct Retrieved {
    pub np: Vec<ScoredItem>,
    pub sg: Vec<ScoredItem>,
    pub ec: EcPrompt,
}

fn retrieve_one(
    query: &Query,
    bank: &RetrievalBank,
    stats: Option<&CategoryStats>,
    k: usize,
    seed: u64,
    config: &InferenceConfig,
) -> Result<Vec<ScoredItem>> {
    let items = match (config.mode, stats) {
        (RetrievalMode::DirectTopK, _) => direct_top_k(query, bank, k)?,
        (RetrievalMode::InDomain, Some(s)) => retrieve_in_domain(query, bank, s, seed, config.retention)?,
        (RetrievalMode::CrossDomain, Some(s)) => retrieve_cross_domain(query, bank, s)?,
        (mode, None) => {
            let expected = mode.stats_mode().map_or("none", StatsMode::as_str);
            return Err(Error::StatsModeMismatch { expected, found: "none" });
        }
    };
    if items.is_empty() {
        return Ok(items);
    }
    top_p_refine(&items, config.tau)
}

/// Category-aware (or direct) retrieval with top-p refinement over both
/// banks, plus the softmax-weighted caption mixture. Random draws are
/// seeded per bank and per video id.
pub fn retrieve_for_video(video_id: &str, store: &VideoFeatureStore, banks: InferenceBanks<'_>, config: &InferenceConfig) -> Result<Retrieved> {
    let query = Query::from_frames(store.lookup(video_id)?)?;
    let np_seed = derive_seed_for(derive_seed(config.seed, NP_STREAM), video_id);
    let sg_seed = derive_seed_for(derive_seed(config.seed, SG_STREAM), video_id);
    Ok(Retrieved {
        np: retrieve_one(&query, banks.np, banks.np_stats, config.k_np, np_seed, config)?,
        sg: retrieve_one(&query, banks.sg, banks.sg_stats, config.k_sg, sg_seed, config)?,
        ec: ec_weighted_embedding(&query, banks.ec, config.temperature)?,
    })
}

/// Bundle for one retrieval result.
pub fn bundle_from_retrieved(retrieved: &Retrieved, banks: InferenceBanks<'_>) -> PromptBundle {
    PromptBundle {
        np_slots: slots(&retrieved.np, banks.np),
        sg_slots: slots(&retrieved.sg, banks.sg),
        ec_slot: retrieved.ec.vector.clone(),
        target_text: None,
        provenance: None,
    }
}

pub fn build_inference_prompt(video_id: &str, store: &VideoFeatureStore, banks: InferenceBanks<'_>, config: &InferenceConfig) -> Result<PromptBundle> {
    Ok(bundle_from_retrieved(&retrieve_for_video(video_id, store, banks, config)?, banks))
}
