//! Per-video frame feature containers.
//!
//! Layout: `MGPV`, u32 version = 1, u32 video_count, u32 dim; an index of
//! `(u16 id_len, id bytes, u32 frame_count, u64 byte_offset)` entries; then
//! the frame matrices as little-endian f32, row-major. Offsets count from
//! the start of the file and must point past the index.

use std::collections::BTreeSet;
use std::path::Path;

use promptbank_core::corpus::{FrameMatrix, VideoFeatureStore};

use super::{decode_f32, encode_f32, format_err, read_bytes, write_bytes, FormatError, Reader};
use crate::error::Result;

pub const MAGIC: [u8; 4] = *b"MGPV";
pub const VERSION: u32 = 1;

pub fn decode(bytes: &[u8]) -> Result<VideoFeatureStore, FormatError> {
    let mut r = Reader::new(bytes);
    r.magic(MAGIC)?;
    let version = r.u32()?;
    if version != VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }
    let count = r.u32()? as usize;
    let dim = r.u32()? as usize;
    if dim == 0 {
        return Err(FormatError::ZeroDimension);
    }
    let mut index = Vec::with_capacity(count.min(1 << 16));
    let mut seen = BTreeSet::new();
    for _ in 0..count {
        let len = r.u16()? as usize;
        let id = std::str::from_utf8(r.take(len)?).map_err(|_| FormatError::InvalidKey)?.to_string();
        let frames = r.u32()? as usize;
        let offset = r.u64()?;
        if !seen.insert(id.clone()) {
            return Err(FormatError::DuplicateVideoId(id));
        }
        index.push((id, frames, offset));
    }
    let data_start = r.pos() as u64;
    let mut store = VideoFeatureStore::new(dim);
    for (id, frames, offset) in index {
        if frames == 0 {
            return Err(FormatError::EmptyVideo(id));
        }
        let len = (frames as u64).checked_mul(dim as u64 * 4);
        let end = len.and_then(|l| offset.checked_add(l));
        let (start, end) = match end {
            Some(end) if offset >= data_start && end <= bytes.len() as u64 => (offset as usize, end as usize),
            _ => return Err(FormatError::IndexOutOfBounds(id)),
        };
        let data = decode_f32(&bytes[start..end]);
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(FormatError::NonFiniteValue(i / dim));
        }
        let matrix = FrameMatrix::new(dim, data).expect("length is a multiple of dim");
        store.insert(id, matrix).expect("ids checked unique and frames non-empty");
    }
    Ok(store)
}

/// Serializes videos in store order with frame data packed after the index.
pub fn encode(store: &VideoFeatureStore) -> Result<Vec<u8>, FormatError> {
    let count = u32::try_from(store.len()).map_err(|_| FormatError::TooLarge("video count"))?;
    let dim = u32::try_from(store.dim()).map_err(|_| FormatError::TooLarge("dimension"))?;
    let mut index_len = 0usize;
    for (id, _) in store.iter() {
        if id.len() > u16::MAX as usize {
            return Err(FormatError::TooLarge("video id"));
        }
        index_len += 2 + id.len() + 4 + 8;
    }
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&count.to_le_bytes());
    out.extend_from_slice(&dim.to_le_bytes());
    let mut offset = (16 + index_len) as u64;
    for (id, frames) in store.iter() {
        let t = u32::try_from(frames.frame_count()).map_err(|_| FormatError::TooLarge("frame count"))?;
        out.extend_from_slice(&(id.len() as u16).to_le_bytes());
        out.extend_from_slice(id.as_bytes());
        out.extend_from_slice(&t.to_le_bytes());
        out.extend_from_slice(&offset.to_le_bytes());
        offset += frames.data().len() as u64 * 4;
    }
    for (_, frames) in store.iter() {
        encode_f32(&mut out, frames.data());
    }
    Ok(out)
}

pub fn load(path: &Path) -> Result<VideoFeatureStore> {
    decode(&read_bytes(path)?).map_err(format_err(path))
}

pub fn write(path: &Path, store: &VideoFeatureStore) -> Result<()> {
    let bytes = encode(store).map_err(format_err(path))?;
    write_bytes(path, &bytes)
}
