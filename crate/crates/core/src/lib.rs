//! Multi-granularity textual memory banks and category-aware retrieval.
//!
//! This crate holds the pure computational side of the pipeline and builds
//! without `std` (it needs `alloc`). Everything that touches the filesystem,
//! the binary container formats or the command line lives in the companion
//! `promptbank` crate.
//!
//! The pieces, bottom-up:
//!
//! - [`corpus`]: captions with pre-parsed noun phrases and triples, keyed
//!   embedding banks and per-video frame features.
//! - [`banks`]: the noun-phrase, scene-graph and entire-caption banks.
//! - [`taxonomy`]: category assignment and the statistical priors used to
//!   size per-category retrieval.
//! - [`retrieval`]: similarity kernels, direct top-K, category-aware
//!   retrieval, top-p refinement and the softmax-weighted caption prompt.
//! - [`prompt`]: training-time embedding augmentation and prompt bundles.
//! - [`metrics`]: BLEU@4, ROUGE-L, CIDEr and Self-BLEU.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod banks;
pub mod corpus;
pub mod error;
pub mod metrics;
pub mod presets;
pub mod prompt;
pub mod retrieval;
pub mod rng;
pub mod taxonomy;
pub mod text;
pub mod vector;

pub use error::{Error, Result};
