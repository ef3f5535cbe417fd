//! On-disk formats: embedding matrices, video feature containers, caption
//! records and JSON artifacts.

pub mod captions;
pub mod json;
pub mod mgpb;
pub mod mgpv;

use std::fs;
use std::path::Path;

use crate::error::{PipelineError, Result};

/// Structural problems in a binary container.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FormatError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported version {0}")]
    UnsupportedVersion(u32),
    #[error("file truncated: needed {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("{extra} trailing bytes after the payload")]
    TrailingBytes { extra: usize },
    #[error("matrix has {rows} rows but {keys} keys")]
    RowCountMismatch { rows: usize, keys: usize },
    #[error("non-finite value in row {0}")]
    NonFiniteValue(usize),
    #[error("dimension must be at least 1")]
    ZeroDimension,
    #[error("frames of video {0} lie outside the file")]
    IndexOutOfBounds(String),
    #[error("video {0} is listed twice")]
    DuplicateVideoId(String),
    #[error("video {0} has no frames")]
    EmptyVideo(String),
    #[error("key is not valid UTF-8 or contains a line break")]
    InvalidKey,
    #[error("{0} exceeds the format's size limit")]
    TooLarge(&'static str),
}

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| PipelineError::io(path, e))
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))
}

/// Writes `bytes`, creating parent directories as needed.
pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| PipelineError::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| PipelineError::Io { path: path.into(), source: e })
}

pub(crate) fn format_err(path: &Path) -> impl FnOnce(FormatError) -> PipelineError + '_ {
    move |source| PipelineError::Format { path: path.into(), source }
}

/// Little-endian cursor over an in-memory file.
pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub(crate) fn pos(&self) -> usize {
        self.pos
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or(FormatError::Truncated { needed: self.pos.saturating_add(n), available: self.bytes.len() })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub(crate) fn magic(&mut self, expected: [u8; 4]) -> Result<(), FormatError> {
        let found: [u8; 4] = self.take(4)?.try_into().expect("four bytes");
        if found != expected {
            return Err(FormatError::BadMagic { expected, found });
        }
        Ok(())
    }

    pub(crate) fn u16(&mut self) -> Result<u16, FormatError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("two bytes")))
    }

    pub(crate) fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("four bytes")))
    }

    pub(crate) fn u64(&mut self) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("eight bytes")))
    }
}

/// Decodes little-endian f32 values.
pub(crate) fn decode_f32(bytes: &[u8]) -> Vec<f32> {
    bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("four bytes"))).collect()
}

pub(crate) fn encode_f32(out: &mut Vec<u8>, values: &[f32]) {
    out.reserve(values.len() * 4);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}
