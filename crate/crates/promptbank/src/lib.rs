//! File formats, configuration and the command-line pipeline around
//! `promptbank-core`.

pub mod config;
pub mod error;
pub mod eval;
pub mod io;
pub mod logging;
pub mod pipeline;

pub use error::{PipelineError, Result};
