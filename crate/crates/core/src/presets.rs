//! Per-dataset hyperparameter defaults.

use crate::prompt::RetrievalMode;

/// Softmax temperature of the entire-caption mixture when none is given.
pub const DEFAULT_TEMPERATURE: f64 = 1.0;
/// Base retrieval count of cross-domain quotas when none is given.
pub const DEFAULT_BASE_RETRIEVAL: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    /// Noun-phrase bank size.
    pub np_bank_size: usize,
    /// Scene-graph bank size.
    pub sg_bank_size: usize,
    /// Training captions, informational: the caption bank holds them all.
    pub caption_count: usize,
    pub k_np: usize,
    pub k_sg: usize,
    /// Nearest captions sampled from during training augmentation.
    pub neighbors: usize,
    pub noise_variance: f64,
    pub tau: f64,
    pub mode: RetrievalMode,
}

pub const MSVD: Preset = Preset {
    name: "msvd",
    np_bank_size: 1000,
    sg_bank_size: 37711,
    caption_count: 48774,
    k_np: 13,
    k_sg: 16,
    neighbors: 5,
    noise_variance: 0.01,
    tau: 0.6,
    mode: RetrievalMode::InDomain,
};

pub const MSRVTT: Preset = Preset {
    name: "msrvtt",
    np_bank_size: 1000,
    sg_bank_size: 100_000,
    caption_count: 130_260,
    k_np: 14,
    k_sg: 19,
    neighbors: 5,
    noise_variance: 0.01,
    tau: 0.8,
    mode: RetrievalMode::InDomain,
};

pub const VATEX: Preset = Preset {
    name: "vatex",
    np_bank_size: 3000,
    sg_bank_size: 400_000,
    caption_count: 250_060,
    k_np: 10,
    k_sg: 13,
    neighbors: 5,
    noise_variance: 0.01,
    tau: 0.6,
    mode: RetrievalMode::InDomain,
};

/// Banks from MSR-VTT, evaluated on MSVD.
pub const MSRVTT_TO_MSVD: Preset = Preset { name: "msrvtt-to-msvd", k_np: 12, k_sg: 34, tau: 0.5, mode: RetrievalMode::CrossDomain, ..MSRVTT };

/// Banks from MSVD, evaluated on MSR-VTT.
pub const MSVD_TO_MSRVTT: Preset = Preset { name: "msvd-to-msrvtt", k_np: 14, k_sg: 25, tau: 0.5, mode: RetrievalMode::CrossDomain, ..MSVD };

pub const ALL: [Preset; 5] = [MSVD, MSRVTT, VATEX, MSRVTT_TO_MSVD, MSVD_TO_MSRVTT];

pub fn by_name(name: &str) -> Option<Preset> {
    ALL.iter().copied().find(|p| p.name == name)
}
