//! Pipeline configuration: dataset presets, an optional TOML file and
//! command-line overrides, applied in that order.

use std::path::{Path, PathBuf};

use promptbank_core::presets::{self, Preset, DEFAULT_BASE_RETRIEVAL, DEFAULT_TEMPERATURE};
use promptbank_core::prompt::{InferenceConfig, RetrievalMode};
use promptbank_core::retrieval::Retention;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{PipelineError, Result};
use crate::io::read_text;

pub const DEFAULT_PRESET: &str = "msvd";
pub const DEFAULT_SEED: u64 = 0;
/// Caption weights kept per video in `retrieved.jsonl`.
pub const DEFAULT_EC_WEIGHTS_TOPK: usize = 5;

/// Everything that influences output contents. File paths are excluded so
/// the hash survives moving a run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub dataset: String,
    pub np_bank_size: usize,
    pub sg_bank_size: usize,
    pub k_np: usize,
    pub k_sg: usize,
    pub neighbors: usize,
    pub noise_variance: f64,
    pub tau: f64,
    pub base_retrieval: u64,
    pub temperature: f64,
    pub seed: u64,
    pub mode: RetrievalMode,
    pub retention: Retention,
    pub ec_weights_topk: usize,
}

impl Hyperparameters {
    pub fn from_preset(p: &Preset) -> Self {
        Self {
            dataset: p.name.into(),
            np_bank_size: p.np_bank_size,
            sg_bank_size: p.sg_bank_size,
            k_np: p.k_np,
            k_sg: p.k_sg,
            neighbors: p.neighbors,
            noise_variance: p.noise_variance,
            tau: p.tau,
            base_retrieval: DEFAULT_BASE_RETRIEVAL,
            temperature: DEFAULT_TEMPERATURE,
            seed: DEFAULT_SEED,
            mode: p.mode,
            retention: Retention::PerCategory,
            ec_weights_topk: DEFAULT_EC_WEIGHTS_TOPK,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(PipelineError::InvalidConfig(m.into()));
        let counts = [
            ("np_bank_size", self.np_bank_size),
            ("sg_bank_size", self.sg_bank_size),
            ("k_np", self.k_np),
            ("k_sg", self.k_sg),
            ("neighbors", self.neighbors),
            ("base_retrieval", self.base_retrieval as usize),
        ];
        if let Some((name, _)) = counts.iter().find(|c| c.1 == 0) {
            return bad(&format!("{name} must be at least 1"));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau must lie in (0, 1]");
        }
        if !(self.noise_variance >= 0.0 && self.noise_variance.is_finite()) {
            return bad("noise_variance must be finite and non-negative");
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad("temperature must be finite and positive");
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form (keys sorted, no whitespace).
    pub fn hash(&self) -> String {
        let value = serde_json::to_value(self).expect("hyperparameters serialize");
        let canonical = serde_json::to_string(&value).expect("value serializes");
        Sha256::digest(canonical.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn inference(&self) -> InferenceConfig {
        InferenceConfig {
            mode: self.mode,
            tau: self.tau,
            k_np: self.k_np,
            k_sg: self.k_sg,
            temperature: self.temperature,
            seed: self.seed,
            retention: self.retention,
        }
    }
}

/// Optional settings shared by the TOML file and the command line.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    pub preset: Option<String>,
    pub data_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub np_bank_size: Option<usize>,
    pub sg_bank_size: Option<usize>,
    pub k_np: Option<usize>,
    pub k_sg: Option<usize>,
    pub neighbors: Option<usize>,
    pub noise_variance: Option<f64>,
    pub tau: Option<f64>,
    pub base_retrieval: Option<u64>,
    pub temperature: Option<f64>,
    pub seed: Option<u64>,
    pub mode: Option<RetrievalMode>,
    pub retention: Option<Retention>,
    pub ec_weights_topk: Option<usize>,
}

impl Overrides {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| PipelineError::InvalidConfig(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&read_text(path)?)
    }

    fn apply(&self, h: &mut Hyperparameters) {
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = &self.$f { h.$f = v.clone(); } )* };
        }
        set!(np_bank_size, sg_bank_size, k_np, k_sg, neighbors, noise_variance, tau, base_retrieval, temperature, seed, mode, retention, ec_weights_topk);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub hyper: Hyperparameters,
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
}

impl PipelineConfig {
    /// Preset (flag, then file, then the default), overlaid by the file,
    /// overlaid by flags.
    pub fn resolve(file: Option<&Overrides>, flags: &Overrides) -> Result<Self> {
        let empty = Overrides::default();
        let file = file.unwrap_or(&empty);
        let name = flags.preset.as_deref().or(file.preset.as_deref()).unwrap_or(DEFAULT_PRESET);
        let preset = presets::by_name(name).ok_or_else(|| PipelineError::InvalidConfig(format!("unknown preset {name:?}")))?;
        let mut hyper = Hyperparameters::from_preset(&preset);
        file.apply(&mut hyper);
        flags.apply(&mut hyper);
        hyper.validate()?;
        Ok(Self {
            hyper,
            data_dir: flags.data_dir.clone().or_else(|| file.data_dir.clone()).unwrap_or_else(|| PathBuf::from(".")),
            out_dir: flags.out_dir.clone().or_else(|| file.out_dir.clone()).unwrap_or_else(|| PathBuf::from("out")),
        })
    }

    pub fn from_preset(name: &str, data_dir: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> Result<Self> {
        let flags = Overrides { preset: Some(name.into()), data_dir: Some(data_dir.into()), out_dir: Some(out_dir.into()), ..Default::default() };
        Self::resolve(None, &flags)
    }

    pub fn hash(&self) -> String {
        self.hyper.hash()
    }
}
