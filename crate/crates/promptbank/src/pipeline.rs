//! Pipeline stages.
//!
//! Each stage reads inputs from the data directory and from earlier stages'
//! outputs in the output directory, and writes deterministic artifacts.
//! Per-item work runs on the rayon pool; results are collected in input
//! order before anything is written, so thread count never changes bytes.
//!
//! Stage order: `sg-candidates` → (external sentence encoder embeds
//! `strings.txt`) → `sg-select` → `build-banks` → `classify` → `stats` →
//! `retrieve` / `assemble-infer`; `assemble-train` needs only the banks.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use promptbank_core::banks::{
    build_ec_bank, build_np_bank, build_sg_bank, emit_sg_candidates, select_for_set, CaptionBank, EnhancedTriple, NounPhraseBank,
    SceneGraphBank,
};
use promptbank_core::corpus::{CaptionCorpus, EmbeddingBank, VideoFeatureStore};
use promptbank_core::prompt::{
    build_training_prompt, bundle_from_retrieved, retrieve_for_video, AugmentedEmbedding, InferenceBanks, NeighborIndex, PromptBundle,
    RetrievalMode, Retrieved, Slot, NEIGHBOR_POOL_POLICY,
};
use promptbank_core::retrieval::{RetrievalBank, ScoredItem};
use promptbank_core::taxonomy::{
    assign_categories, categorize_scene_graphs, compute_cross_domain_quotas, compute_in_domain_stats, compute_sg_cross_domain_quotas,
    compute_sg_in_domain_stats, CategoryFile, CategoryModel, CategoryPair, CategoryStats, StatsMode,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Hyperparameters, PipelineConfig};
use crate::error::{PipelineError, Result};
use crate::io::captions::load_captions;
use crate::io::json::{read_json, read_jsonl, write_json, write_jsonl};
use crate::io::{mgpb, mgpv, write_bytes};

/// Artifact file names inside the output directory.
pub mod files {
    pub const SG_CANDIDATES: &str = "sg_candidates.jsonl";
    pub const STRINGS: &str = "strings.txt";
    pub const SG_SELECTED: &str = "sg_selected.jsonl";
    pub const NP_BANK: &str = "np_bank.json";
    pub const SG_BANK: &str = "sg_bank.json";
    pub const EC_BANK: &str = "ec_bank.json";
    pub const CATEGORY_MODEL: &str = "category_model.json";
    pub const STATS: &str = "stats.json";
    pub const RETRIEVED: &str = "retrieved.jsonl";
    pub const EC_VECTORS: &str = "ec_vectors.mgpb";
    pub const REPORT: &str = "report.json";
}

/// Input file locations inside the data directory.
#[derive(Debug, Clone, PartialEq)]
pub struct Inputs {
    pub captions: PathBuf,
    pub categories: PathBuf,
    /// Sentence-encoder vectors for caption texts, candidate triples and
    /// phrases.
    pub bge: PathBuf,
    /// Joint-space text vectors for bank phrases and triple keys.
    pub clip_text: PathBuf,
    /// Joint-space caption vectors keyed by caption id.
    pub clip_captions: PathBuf,
    pub video_features: PathBuf,
}

impl Inputs {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            captions: dir.join("captions.jsonl"),
            categories: dir.join("categories.json"),
            bge: dir.join("bge.mgpb"),
            clip_text: dir.join("clip_text.mgpb"),
            clip_captions: dir.join("clip_captions.mgpb"),
            video_features: dir.join("video_features.mgpv"),
        }
    }
}

/// A JSON document carrying the configuration that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stamped<T> {
    pub config: Hyperparameters,
    pub config_hash: String,
    #[serde(flatten)]
    pub body: T,
}

impl<T> Stamped<T> {
    pub fn new(cfg: &PipelineConfig, body: T) -> Self {
        Self { config: cfg.hyper.clone(), config_hash: cfg.hash(), body }
    }
}

/// A JSONL record tagged with the configuration hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tagged<T> {
    pub config_hash: String,
    #[serde(flatten)]
    pub record: T,
}

fn out(cfg: &PipelineConfig, name: &str) -> PathBuf {
    cfg.out_dir.join(name)
}

fn inputs(cfg: &PipelineConfig) -> Inputs {
    Inputs::in_dir(&cfg.data_dir)
}

fn tag<T>(cfg: &PipelineConfig, records: Vec<T>) -> Vec<Tagged<T>> {
    let hash = cfg.hash();
    records.into_iter().map(|record| Tagged { config_hash: hash.clone(), record }).collect()
}

fn load_corpus(cfg: &PipelineConfig) -> Result<CaptionCorpus> {
    Ok(load_captions(&inputs(cfg).captions)?.0)
}

// ---------------------------------------------------------------------------
// Scene-graph enhancement

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub caption_id: String,
    pub triple_index: usize,
    pub candidates: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CandidateSummary {
    pub sets: usize,
    pub strings: usize,
}

/// Writes every (caption, triple) candidate list and the deduplicated
/// strings the sentence encoder must embed.
pub fn sg_candidates(cfg: &PipelineConfig) -> Result<CandidateSummary> {
    let corpus = load_corpus(cfg)?;
    let manifest = emit_sg_candidates(&corpus);
    let records: Vec<CandidateRecord> = manifest
        .sets
        .iter()
        .map(|s| CandidateRecord {
            caption_id: s.caption_id.clone(),
            triple_index: s.triple_index,
            candidates: s.candidates.iter().map(|t| t.key()).collect(),
        })
        .collect();
    write_jsonl(&out(cfg, files::SG_CANDIDATES), &tag(cfg, records))?;
    let strings_path = out(cfg, files::STRINGS);
    let text = mgpb::encode_keys(&manifest.strings).map_err(crate::io::format_err(&strings_path))?;
    write_bytes(&strings_path, text.as_bytes())?;
    let summary = CandidateSummary { sets: manifest.sets.len(), strings: manifest.strings.len() };
    log::info!("emitted {} candidate sets and {} strings", summary.sets, summary.strings);
    Ok(summary)
}

/// Picks, for every triple, the candidate closest to its caption.
pub fn select_scene_graphs(corpus: &CaptionCorpus, bge: &EmbeddingBank) -> Result<Vec<EnhancedTriple>> {
    let manifest = emit_sg_candidates(corpus);
    let picked: Vec<_> = manifest.sets.par_iter().map(|set| select_for_set(corpus, set, bge)).collect();
    Ok(picked.into_iter().collect::<promptbank_core::Result<Vec<_>>>()?)
}

pub fn sg_select(cfg: &PipelineConfig) -> Result<usize> {
    let corpus = load_corpus(cfg)?;
    let bge = mgpb::load(&inputs(cfg).bge)?;
    let selections = select_scene_graphs(&corpus, &bge)?;
    write_jsonl(&out(cfg, files::SG_SELECTED), &tag(cfg, selections.clone()))?;
    log::info!("selected {} enhanced scene graphs", selections.len());
    Ok(selections.len())
}

pub fn read_selections(cfg: &PipelineConfig) -> Result<Vec<EnhancedTriple>> {
    let records: Vec<Tagged<EnhancedTriple>> = read_jsonl(&out(cfg, files::SG_SELECTED))?;
    Ok(records.into_iter().map(|r| r.record).collect())
}

// ---------------------------------------------------------------------------
// Memory banks

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BankSummary {
    pub np: usize,
    pub sg: usize,
    pub ec: usize,
}

/// Builds the three banks. Scene graphs come from `sg_selected.jsonl`.
pub fn build_banks(cfg: &PipelineConfig) -> Result<BankSummary> {
    let corpus = load_corpus(cfg)?;
    let selections = read_selections(cfg)?;
    let np = build_np_bank(&corpus, cfg.hyper.np_bank_size)?;
    let sg = build_sg_bank(&selections, cfg.hyper.sg_bank_size);
    let ec = build_ec_bank(&corpus);
    write_json(&out(cfg, files::NP_BANK), &Stamped::new(cfg, &np))?;
    write_json(&out(cfg, files::SG_BANK), &Stamped::new(cfg, &sg))?;
    write_json(&out(cfg, files::EC_BANK), &Stamped::new(cfg, &ec))?;
    let summary = BankSummary { np: np.len(), sg: sg.len(), ec: ec.len() };
    log::info!("banks: {} noun phrases, {} scene graphs, {} captions", summary.np, summary.sg, summary.ec);
    Ok(summary)
}

pub fn read_np_bank(cfg: &PipelineConfig) -> Result<NounPhraseBank> {
    Ok(read_json::<Stamped<NounPhraseBank>>(&out(cfg, files::NP_BANK))?.body)
}

pub fn read_sg_bank(cfg: &PipelineConfig) -> Result<SceneGraphBank> {
    Ok(read_json::<Stamped<SceneGraphBank>>(&out(cfg, files::SG_BANK))?.body)
}

pub fn read_ec_bank(cfg: &PipelineConfig) -> Result<CaptionBank> {
    Ok(read_json::<Stamped<CaptionBank>>(&out(cfg, files::EC_BANK))?.body)
}

// ---------------------------------------------------------------------------
// Taxonomy

/// Category assignments by name, as stored in `category_model.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryModelFile {
    pub categories: Vec<String>,
    pub np_assignment: BTreeMap<String, String>,
    /// Triple key → [subject category, object category].
    pub sg_assignment: BTreeMap<String, [String; 2]>,
    /// Phrases named by the category file but absent from the bank.
    pub ignored: Vec<String>,
}

impl CategoryModelFile {
    pub fn from_model(model: &CategoryModel, ignored: Vec<String>) -> Self {
        let name = |i: usize| model.categories[i].clone();
        Self {
            categories: model.categories.clone(),
            np_assignment: model.np_assignment.iter().map(|(k, &c)| (k.clone(), name(c))).collect(),
            sg_assignment: model.sg_assignment.iter().map(|(k, p)| (k.clone(), [name(p.subject), name(p.object)])).collect(),
            ignored,
        }
    }

    pub fn to_model(&self) -> Result<CategoryModel> {
        let index = |n: &str| {
            self.categories.iter().position(|c| c == n).ok_or_else(|| promptbank_core::Error::UnknownCategory(n.into()))
        };
        let mut np_assignment = BTreeMap::new();
        for (k, n) in &self.np_assignment {
            np_assignment.insert(k.clone(), index(n)?);
        }
        let mut sg_assignment = BTreeMap::new();
        for (k, [s, o]) in &self.sg_assignment {
            sg_assignment.insert(k.clone(), CategoryPair { subject: index(s)?, object: index(o)? });
        }
        Ok(CategoryModel { categories: self.categories.clone(), np_assignment, sg_assignment })
    }
}

/// Assigns categories to the noun-phrase bank from the category file and
/// pairs categories for every scene graph.
pub fn classify(cfg: &PipelineConfig) -> Result<CategoryModel> {
    let file: CategoryFile = read_json(&inputs(cfg).categories)?;
    let np = read_np_bank(cfg)?;
    let sg = read_sg_bank(cfg)?;
    let bge = mgpb::load(&inputs(cfg).bge)?;
    let assignment = assign_categories(&np, &file)?;
    if !assignment.ignored.is_empty() {
        log::warn!("{} categorized phrases are not in the noun-phrase bank", assignment.ignored.len());
    }
    let mut model = assignment.model;
    categorize_scene_graphs(&mut model, &sg, &bge)?;
    write_json(&out(cfg, files::CATEGORY_MODEL), &Stamped::new(cfg, CategoryModelFile::from_model(&model, assignment.ignored)))?;
    log::info!("classified {} phrases and {} scene graphs into {} pair categories", np.len(), sg.len(), model.pair_layout().len());
    Ok(model)
}

pub fn read_category_model(cfg: &PipelineConfig) -> Result<CategoryModel> {
    read_json::<Stamped<CategoryModelFile>>(&out(cfg, files::CATEGORY_MODEL))?.body.to_model()
}

/// Priors for both banks under one mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsFile {
    pub mode: StatsMode,
    pub np: CategoryStats,
    pub sg: CategoryStats,
}

fn stats_mode(cfg: &PipelineConfig) -> Result<StatsMode> {
    cfg.hyper
        .mode
        .stats_mode()
        .ok_or_else(|| PipelineError::InvalidConfig("statistics need mode in_domain or cross_domain".into()))
}

pub fn stats(cfg: &PipelineConfig) -> Result<StatsFile> {
    let mode = stats_mode(cfg)?;
    let corpus = load_corpus(cfg)?;
    let model = read_category_model(cfg)?;
    let selections = read_selections(cfg)?;
    let b = cfg.hyper.base_retrieval;
    let file = match mode {
        StatsMode::InDomain => StatsFile {
            mode,
            np: CategoryStats::InDomain(compute_in_domain_stats(&corpus, &model)?),
            sg: CategoryStats::InDomain(compute_sg_in_domain_stats(&corpus, &selections, &model)?),
        },
        StatsMode::CrossDomain => StatsFile {
            mode,
            np: CategoryStats::CrossDomain(compute_cross_domain_quotas(&corpus, &model, b)?),
            sg: CategoryStats::CrossDomain(compute_sg_cross_domain_quotas(&selections, &model, b)?),
        },
    };
    write_json(&out(cfg, files::STATS), &Stamped::new(cfg, &file))?;
    log::info!("computed {} statistics", mode.as_str());
    Ok(file)
}

pub fn read_stats(cfg: &PipelineConfig) -> Result<StatsFile> {
    Ok(read_json::<Stamped<StatsFile>>(&out(cfg, files::STATS))?.body)
}

// ---------------------------------------------------------------------------
// Inference-time retrieval

/// Everything inference needs, loaded once.
pub struct InferenceContext {
    pub np: RetrievalBank,
    pub sg: RetrievalBank,
    pub ec: RetrievalBank,
    pub stats: Option<StatsFile>,
    pub store: VideoFeatureStore,
}

impl InferenceContext {
    pub fn load(cfg: &PipelineConfig) -> Result<Self> {
        let clip_text = mgpb::load(&inputs(cfg).clip_text)?;
        let clip_captions = mgpb::load(&inputs(cfg).clip_captions)?;
        let np_bank = read_np_bank(cfg)?;
        let sg_bank = read_sg_bank(cfg)?;
        let (np, sg, stats) = if cfg.hyper.mode == RetrievalMode::DirectTopK {
            (
                RetrievalBank::uncategorized(np_bank.phrases().map(String::from).collect(), &clip_text)?,
                RetrievalBank::uncategorized(sg_bank.keys().collect(), &clip_text)?,
                None,
            )
        } else {
            let model = read_category_model(cfg)?;
            (
                RetrievalBank::for_noun_phrases(&np_bank, &model, &clip_text)?,
                RetrievalBank::for_scene_graphs(&sg_bank, &model, &clip_text)?,
                Some(read_stats(cfg)?),
            )
        };
        let ec = RetrievalBank::for_captions(&read_ec_bank(cfg)?, &clip_captions)?;
        let store = mgpv::load(&inputs(cfg).video_features)?;
        Ok(Self { np, sg, ec, stats, store })
    }

    pub fn banks(&self) -> InferenceBanks<'_> {
        InferenceBanks {
            np: &self.np,
            sg: &self.sg,
            ec: &self.ec,
            np_stats: self.stats.as_ref().map(|s| &s.np),
            sg_stats: self.stats.as_ref().map(|s| &s.sg),
        }
    }

    /// Retrieval for every stored video, in video-id order.
    pub fn retrieve_all(&self, cfg: &PipelineConfig) -> Result<Vec<(String, Retrieved)>> {
        let config = cfg.hyper.inference();
        let ids: Vec<&str> = self.store.iter().map(|(id, _)| id).collect();
        let results: Vec<_> = ids
            .par_iter()
            .map(|id| retrieve_for_video(id, &self.store, self.banks(), &config).map(|r| (id.to_string(), r)))
            .collect();
        Ok(results.into_iter().collect::<promptbank_core::Result<Vec<_>>>()?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionWeight {
    pub caption_id: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedRecord {
    pub video_id: String,
    pub np: Vec<ScoredItem>,
    pub sg: Vec<ScoredItem>,
    pub ec_weights_topk: Vec<CaptionWeight>,
}

/// Writes the refined retrieval sets per video and the full caption
/// mixtures as a matrix keyed by video id.
pub fn retrieve(cfg: &PipelineConfig) -> Result<Vec<RetrievedRecord>> {
    let ctx = InferenceContext::load(cfg)?;
    let results = ctx.retrieve_all(cfg)?;
    let records: Vec<RetrievedRecord> = results
        .iter()
        .map(|(id, r)| RetrievedRecord {
            video_id: id.clone(),
            np: r.np.clone(),
            sg: r.sg.clone(),
            ec_weights_topk: r
                .ec
                .top_weights(cfg.hyper.ec_weights_topk)
                .into_iter()
                .map(|(i, weight)| CaptionWeight { caption_id: ctx.ec.keys()[i].clone(), weight })
                .collect(),
        })
        .collect();
    write_jsonl(&out(cfg, files::RETRIEVED), &tag(cfg, records.clone()))?;
    let ids: Vec<&str> = results.iter().map(|(id, _)| id.as_str()).collect();
    let data: Vec<f32> = results.iter().flat_map(|(_, r)| r.ec.vector.iter().copied()).collect();
    mgpb::write_rows(&out(cfg, files::EC_VECTORS), ctx.ec.dim(), &ids, &data)?;
    log::info!("retrieved prompts for {} videos", records.len());
    Ok(records)
}

// ---------------------------------------------------------------------------
// Prompt export

/// Which prompt dataset an export holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    Train,
    Infer,
}

impl PromptKind {
    pub fn records_file(self) -> &'static str {
        match self {
            Self::Train => "prompts_train.jsonl",
            Self::Infer => "prompts_infer.jsonl",
        }
    }

    pub fn vectors_file(self) -> &'static str {
        match self {
            Self::Train => "prompt_vectors_train.mgpb",
            Self::Infer => "prompt_vectors_infer.mgpb",
        }
    }

    pub fn manifest_file(self) -> &'static str {
        match self {
            Self::Train => "manifest_train.json",
            Self::Infer => "manifest_infer.json",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotRef {
    pub key: String,
    pub score: f64,
    /// Row of the slot vector in the export matrix.
    pub row: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub record_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampled_neighbor_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_variance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_text: Option<String>,
    pub np: Vec<SlotRef>,
    pub sg: Vec<SlotRef>,
    pub ec_row: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptManifest {
    pub kind: PromptKind,
    pub seed: u64,
    pub records: usize,
    pub rows: usize,
    pub dim: usize,
    pub slot_order: Vec<String>,
    pub neighbor_pool_policy: String,
    /// Items with no embedding, left out of the export.
    pub skipped: Vec<String>,
    pub records_file: String,
    pub vectors_file: String,
}

/// One exported bundle with its training-side provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct ExportItem {
    pub record_id: String,
    pub bundle: PromptBundle,
    pub augmentation: Option<AugmentedEmbedding>,
}

fn export_prompts(cfg: &PipelineConfig, kind: PromptKind, dim: usize, items: &[ExportItem], skipped: Vec<String>) -> Result<PromptManifest> {
    let mut keys: Vec<String> = Vec::new();
    let mut data: Vec<f32> = Vec::new();
    let mut records = Vec::with_capacity(items.len());
    let mut push = |key: String, v: &[f32]| -> Result<usize> {
        if v.len() != dim {
            return Err(promptbank_core::Error::DimensionMismatch { expected: dim, found: v.len() }.into());
        }
        keys.push(key);
        data.extend_from_slice(v);
        Ok(keys.len() - 1)
    };
    for item in items {
        let id = &item.record_id;
        let mut refs = |group: &str, slots: &[Slot]| -> Result<Vec<SlotRef>> {
            slots
                .iter()
                .enumerate()
                .map(|(i, s)| Ok(SlotRef { key: s.key.clone(), score: s.score, row: push(format!("{id}/{group}/{i}"), &s.vector)? }))
                .collect()
        };
        let np = refs("np", &item.bundle.np_slots)?;
        let sg = refs("sg", &item.bundle.sg_slots)?;
        let ec_row = push(format!("{id}/ec"), &item.bundle.ec_slot)?;
        records.push(PromptRecord {
            record_id: id.clone(),
            sampled_neighbor_id: item.augmentation.as_ref().map(|a| a.sampled_neighbor_id.clone()),
            noise_variance: item.augmentation.as_ref().map(|a| a.noise_variance),
            target_text: item.bundle.target_text.clone(),
            np,
            sg,
            ec_row,
        });
    }
    let manifest = PromptManifest {
        kind,
        seed: cfg.hyper.seed,
        records: records.len(),
        rows: keys.len(),
        dim,
        slot_order: ["np", "sg", "ec"].map(String::from).to_vec(),
        neighbor_pool_policy: NEIGHBOR_POOL_POLICY.into(),
        skipped,
        records_file: kind.records_file().into(),
        vectors_file: kind.vectors_file().into(),
    };
    write_jsonl(&out(cfg, kind.records_file()), &tag(cfg, records))?;
    mgpb::write_rows(&out(cfg, kind.vectors_file()), dim, &keys, &data)?;
    write_json(&out(cfg, kind.manifest_file()), &Stamped::new(cfg, &manifest))?;
    log::info!("exported {} {:?} prompt records ({} skipped)", manifest.records, kind, manifest.skipped.len());
    Ok(manifest)
}

/// Rebuilds every exported bundle from a manifest and its files.
pub fn load_prompts(dir: &Path, kind: PromptKind) -> Result<Vec<(String, PromptBundle)>> {
    let manifest: Stamped<PromptManifest> = read_json(&dir.join(kind.manifest_file()))?;
    let records: Vec<Tagged<PromptRecord>> = read_jsonl(&dir.join(&manifest.body.records_file))?;
    let vectors = mgpb::load(&dir.join(&manifest.body.vectors_file))?;
    let slots = |refs: &[SlotRef]| -> Vec<Slot> {
        refs.iter().map(|r| Slot { key: r.key.clone(), score: r.score, vector: vectors.row(r.row).to_vec() }).collect()
    };
    Ok(records
        .into_iter()
        .map(|t| {
            let r = t.record;
            let bundle = PromptBundle {
                np_slots: slots(&r.np),
                sg_slots: slots(&r.sg),
                ec_slot: vectors.row(r.ec_row).to_vec(),
                target_text: r.target_text,
                provenance: Some(t.config_hash),
            };
            (r.record_id, bundle)
        })
        .collect())
}

/// Training bundles for every caption with an embedding: neighbor
/// sampling with Gaussian noise, then direct retrieval from both banks.
pub fn training_bundles(cfg: &PipelineConfig) -> Result<(Vec<ExportItem>, Vec<String>, usize)> {
    let corpus = load_corpus(cfg)?;
    let clip_text = mgpb::load(&inputs(cfg).clip_text)?;
    let clip_captions = mgpb::load(&inputs(cfg).clip_captions)?;
    let np_bank = read_np_bank(cfg)?;
    let sg_bank = read_sg_bank(cfg)?;
    let np = RetrievalBank::uncategorized(np_bank.phrases().map(String::from).collect(), &clip_text)?;
    let sg = RetrievalBank::uncategorized(sg_bank.keys().collect(), &clip_text)?;
    let (kept, missing): (Vec<_>, Vec<_>) = build_ec_bank(&corpus).entries.into_iter().partition(|e| clip_captions.get(&e.id).is_some());
    let skipped: Vec<String> = missing.into_iter().map(|e| e.id).collect();
    for id in &skipped {
        log::warn!("caption {id} has no embedding; skipped");
    }
    let captions = CaptionBank { entries: kept };
    let index = NeighborIndex::new(&captions, &clip_captions)?;
    let h = &cfg.hyper;
    let provenance = cfg.hash();
    let items: Vec<_> = captions
        .entries
        .par_iter()
        .map(|e| {
            let aug = index.augment(&e.id, h.neighbors, h.noise_variance, h.seed)?;
            let mut bundle = build_training_prompt(&aug, &e.text, &np, &sg, h.k_np, h.k_sg)?;
            bundle.provenance = Some(provenance.clone());
            Ok(ExportItem { record_id: e.id.clone(), bundle, augmentation: Some(aug) })
        })
        .collect();
    let items = items.into_iter().collect::<promptbank_core::Result<Vec<_>>>()?;
    Ok((items, skipped, clip_text.dim()))
}

pub fn assemble_train(cfg: &PipelineConfig) -> Result<PromptManifest> {
    let (items, skipped, dim) = training_bundles(cfg)?;
    export_prompts(cfg, PromptKind::Train, dim, &items, skipped)
}

/// Inference bundles for every stored video.
pub fn inference_bundles(cfg: &PipelineConfig) -> Result<(Vec<ExportItem>, usize)> {
    let ctx = InferenceContext::load(cfg)?;
    let provenance = cfg.hash();
    let items = ctx
        .retrieve_all(cfg)?
        .into_iter()
        .map(|(id, r)| {
            let mut bundle = bundle_from_retrieved(&r, ctx.banks());
            bundle.provenance = Some(provenance.clone());
            ExportItem { record_id: id, bundle, augmentation: None }
        })
        .collect();
    Ok((items, ctx.np.dim()))
}

pub fn assemble_infer(cfg: &PipelineConfig) -> Result<PromptManifest> {
    let (items, dim) = inference_bundles(cfg)?;
    export_prompts(cfg, PromptKind::Infer, dim, &items, Vec::new())
}

/// Every stage after external embedding, in order. `stats` is skipped in
/// direct mode.
pub fn run_all(cfg: &PipelineConfig) -> Result<()> {
    sg_candidates(cfg)?;
    sg_select(cfg)?;
    build_banks(cfg)?;
    classify(cfg)?;
    if cfg.hyper.mode != RetrievalMode::DirectTopK {
        stats(cfg)?;
    }
    retrieve(cfg)?;
    assemble_train(cfg)?;
    assemble_infer(cfg)?;
    Ok(())
}
