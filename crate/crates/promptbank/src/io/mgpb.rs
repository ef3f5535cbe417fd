//! Keyed embedding matrices.
//!
//! Matrix file: `MGPB`, u32 version = 1, u32 rows, u32 dim, then
//! `rows × dim` little-endian f32 in row-major order. Keys live in a
//! companion text file with one LF-terminated key per row.

use std::path::{Path, PathBuf};

use promptbank_core::corpus::EmbeddingBank;

use super::{decode_f32, encode_f32, format_err, read_bytes, read_text, write_bytes, FormatError, Reader};
use crate::error::{PipelineError, Result};

pub const MAGIC: [u8; 4] = *b"MGPB";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

/// Row count, dimension and row-major values.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub dim: usize,
    pub data: Vec<f32>,
}

pub fn decode_matrix(bytes: &[u8]) -> Result<Matrix, FormatError> {
    let mut r = Reader::new(bytes);
    r.magic(MAGIC)?;
    let version = r.u32()?;
    if version != VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }
    let rows = r.u32()? as usize;
    let dim = r.u32()? as usize;
    if dim == 0 {
        return Err(FormatError::ZeroDimension);
    }
    let payload = rows.checked_mul(dim).and_then(|n| n.checked_mul(4)).ok_or(FormatError::TooLarge("matrix"))?;
    let data = decode_f32(r.take(payload)?);
    let extra = bytes.len() - r.pos();
    if extra != 0 {
        return Err(FormatError::TrailingBytes { extra });
    }
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(FormatError::NonFiniteValue(i / dim));
    }
    Ok(Matrix { rows, dim, data })
}

pub fn encode_matrix(dim: usize, data: &[f32]) -> Result<Vec<u8>, FormatError> {
    if dim == 0 {
        return Err(FormatError::ZeroDimension);
    }
    debug_assert_eq!(data.len() % dim, 0);
    let rows = u32::try_from(data.len() / dim).map_err(|_| FormatError::TooLarge("row count"))?;
    let dim32 = u32::try_from(dim).map_err(|_| FormatError::TooLarge("dimension"))?;
    let mut out = Vec::with_capacity(HEADER_LEN + data.len() * 4);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&rows.to_le_bytes());
    out.extend_from_slice(&dim32.to_le_bytes());
    encode_f32(&mut out, data);
    Ok(out)
}

/// One key per line. A missing final LF is tolerated.
pub fn decode_keys(text: &str) -> Vec<String> {
    if text.is_empty() {
        return Vec::new();
    }
    text.strip_suffix('\n').unwrap_or(text).split('\n').map(String::from).collect()
}

pub fn encode_keys<S: AsRef<str>>(keys: &[S]) -> Result<String, FormatError> {
    let mut out = String::new();
    for k in keys {
        let k = k.as_ref();
        if k.contains(['\n', '\r']) {
            return Err(FormatError::InvalidKey);
        }
        out.push_str(k);
        out.push('\n');
    }
    Ok(out)
}

/// `foo.mgpb` → `foo.keys`.
pub fn keys_path(matrix_path: &Path) -> PathBuf {
    matrix_path.with_extension("keys")
}

pub fn load_embedding_bank(matrix_path: &Path, keys_path: &Path) -> Result<EmbeddingBank> {
    let matrix = decode_matrix(&read_bytes(matrix_path)?).map_err(format_err(matrix_path))?;
    let keys = decode_keys(&read_text(keys_path)?);
    if keys.len() != matrix.rows {
        return Err(PipelineError::Format {
            path: keys_path.into(),
            source: FormatError::RowCountMismatch { rows: matrix.rows, keys: keys.len() },
        });
    }
    Ok(EmbeddingBank::new(keys, matrix.dim, matrix.data)?)
}

/// Loads `path` and its sibling `.keys` file.
pub fn load(path: &Path) -> Result<EmbeddingBank> {
    load_embedding_bank(path, &keys_path(path))
}

/// Writes `path` and its sibling `.keys` file.
pub fn write(path: &Path, bank: &EmbeddingBank) -> Result<()> {
    write_rows(path, bank.dim(), bank.keys(), bank.data())
}

pub fn write_rows<S: AsRef<str>>(path: &Path, dim: usize, keys: &[S], data: &[f32]) -> Result<()> {
    let bytes = encode_matrix(dim, data).map_err(format_err(path))?;
    let keys_file = keys_path(path);
    let text = encode_keys(keys).map_err(format_err(&keys_file))?;
    write_bytes(path, &bytes)?;
    write_bytes(&keys_file, text.as_bytes())
}
