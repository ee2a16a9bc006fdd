//! FEAT1 binary feature archives.
//!
//! Layout (little-endian): magic `AUDF`, `u32` version (1), `u32` utterance
//! count, then per utterance a `u32` id length, the UTF-8 id, `u32` frames,
//! `u32` dim and `frames * dim` row-major `f32` values.

use std::collections::HashSet;
use std::path::Path;

use ndarray::Array2;

use super::{FeatureSet, Utterance, DEFAULT_FRAME_PERIOD_S};
use crate::error::{ArchiveError, Error, Result};

const MAGIC: &[u8; 4] = b"AUDF";
const VERSION: u32 = 1;

pub fn encode_archive(fs: &FeatureSet) -> Vec<u8> {
    let payload: usize = fs
        .utterances()
        .iter()
        .map(|u| 12 + u.id.len() + 4 * u.features.len())
        .sum();
    let mut out = Vec::with_capacity(12 + payload);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(fs.len() as u32).to_le_bytes());
    for utt in fs.utterances() {
        out.extend_from_slice(&(utt.id.len() as u32).to_le_bytes());
        out.extend_from_slice(utt.id.as_bytes());
        out.extend_from_slice(&(utt.features.nrows() as u32).to_le_bytes());
        out.extend_from_slice(&(utt.features.ncols() as u32).to_le_bytes());
        for &x in utt.features.iter() {
            out.extend_from_slice(&(x as f32).to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ArchiveError> {
        let available = self.bytes.len() - self.pos;
        if available < n {
            return Err(ArchiveError::Truncated {
                offset: self.pos,
                needed: n - available,
            });
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32, ArchiveError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// Decodes an in-memory archive. The returned set uses the default frame
/// period and carries no side map; both live in the sidecar manifest.
pub fn decode_archive(bytes: &[u8]) -> Result<FeatureSet, ArchiveError> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4).map_err(|_| ArchiveError::BadMagic { offset: 0 })? != MAGIC {
        return Err(ArchiveError::BadMagic { offset: 0 });
    }
    let version_offset = cur.pos;
    let version = cur.u32()?;
    if version != VERSION {
        return Err(ArchiveError::UnsupportedVersion {
            offset: version_offset,
            version,
        });
    }
    let count = cur.u32()? as usize;
    let mut seen = HashSet::new();
    let mut dim: Option<usize> = None;
    let mut utterances = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let record_offset = cur.pos;
        let id_len = cur.u32()? as usize;
        let id_offset = cur.pos;
        let id = std::str::from_utf8(cur.take(id_len)?)
            .map_err(|_| ArchiveError::InvalidId { offset: id_offset })?
            .to_string();
        if !seen.insert(id.clone()) {
            return Err(ArchiveError::DuplicateId {
                offset: record_offset,
                id,
            });
        }
        let shape_offset = cur.pos;
        let frames = cur.u32()? as usize;
        let this_dim = cur.u32()? as usize;
        if frames == 0 {
            return Err(ArchiveError::EmptyUtterance {
                offset: shape_offset,
                id,
            });
        }
        match dim {
            Some(expected) if expected != this_dim => {
                return Err(ArchiveError::DimMismatch {
                    offset: shape_offset,
                    id,
                    expected,
                    found: this_dim,
                });
            }
            _ => dim = Some(this_dim),
        }
        let n = frames * this_dim;
        let raw = cur.take(n * 4)?;
        let values: Vec<f64> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        let features = Array2::from_shape_vec((frames, this_dim), values)
            .expect("shape matches payload length");
        utterances.push(Utterance::new(id, features));
    }
    if cur.pos != bytes.len() {
        return Err(ArchiveError::TrailingBytes {
            offset: cur.pos,
            trailing: bytes.len() - cur.pos,
        });
    }
    Ok(FeatureSet::new(utterances, DEFAULT_FRAME_PERIOD_S)
        .expect("archive decoding enforces feature set invariants"))
}

pub fn read_feature_archive(path: impl AsRef<Path>) -> Result<FeatureSet> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_archive(&bytes).map_err(|source| Error::Archive {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_feature_archive(path: impl AsRef<Path>, fs: &FeatureSet) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_archive(fs)).map_err(|e| Error::io(path, e))
}
