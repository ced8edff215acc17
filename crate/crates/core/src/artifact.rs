//! Mapping artifact file format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes   "CUSTXMAP"
//! version      u32       FORMAT_VERSION
//! k            u32
//! measure      u8        0 = euclidean, 1 = cosine
//! seed policy  u8        0 = vocab_order, 1 = frequency_order
//! reserved     u16       0
//! vocab hash   32 bytes
//! dim          u32
//! vocab len    u32
//! surfaces     vocab len × (u32 byte length, UTF-8 bytes)
//! group count  u32
//! groups       group count × (u32 size, size × u32 token id,
//!                             f64 d_min, f64 d_max, size² × f64 scores)
//! checksum     32 bytes  SHA-256 of everything above
//! ```
//!
//! Encoding is a pure function of the mapping, so rebuilding from identical
//! inputs yields byte-identical files.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::embed::{Measure, TokenId, Vocab};
use crate::mapping::{Group, MappingError, MappingTable, SeedPolicy};

pub const MAGIC: &[u8; 8] = b"CUSTXMAP";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a mapping artifact (bad magic)")]
    BadMagic,
    #[error("unsupported mapping format version {0}")]
    UnsupportedVersion(u32),
    #[error("mapping artifact is truncated")]
    Truncated,
    #[error("mapping artifact checksum mismatch")]
    Checksum,
    #[error("corrupt mapping artifact: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Mapping(#[from] MappingError),
}

pub fn encode(mapping: &MappingTable) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, FORMAT_VERSION);
    put_u32(&mut out, mapping.k() as u32);
    out.push(match mapping.measure() {
        Measure::Euclidean => 0,
        Measure::Cosine => 1,
    });
    out.push(match mapping.seed_policy() {
        SeedPolicy::VocabOrder => 0,
        SeedPolicy::FrequencyOrder => 1,
    });
    out.extend_from_slice(&0u16.to_le_bytes());
    out.extend_from_slice(mapping.vocab_hash());
    put_u32(&mut out, mapping.dim() as u32);
    put_u32(&mut out, mapping.vocab().len() as u32);
    for surface in mapping.vocab().surfaces() {
        put_u32(&mut out, surface.len() as u32);
        out.extend_from_slice(surface.as_bytes());
    }
    put_u32(&mut out, mapping.groups().len() as u32);
    for group in mapping.groups() {
        put_u32(&mut out, group.len() as u32);
        for m in group.members() {
            put_u32(&mut out, m.0);
        }
        put_f64(&mut out, group.d_min());
        put_f64(&mut out, group.d_max());
        for &s in group.scores() {
            put_f64(&mut out, s);
        }
    }
    let checksum: [u8; 32] = Sha256::digest(&out).into();
    out.extend_from_slice(&checksum);
    out
}

pub fn decode(bytes: &[u8]) -> Result<MappingTable, ArtifactError> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(ArtifactError::BadMagic);
    }
    if bytes.len() < MAGIC.len() + 4 + 32 {
        return Err(ArtifactError::Truncated);
    }
    let (body, checksum) = bytes.split_at(bytes.len() - 32);
    let mut r = Reader { buf: body, pos: MAGIC.len() };
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(ArtifactError::UnsupportedVersion(version));
    }
    if Sha256::digest(body).as_slice() != checksum {
        return Err(ArtifactError::Checksum);
    }
    let k = r.u32()? as usize;
    let measure = match r.u8()? {
        0 => Measure::Euclidean,
        1 => Measure::Cosine,
        other => return Err(ArtifactError::Corrupt(format!("unknown measure tag {other}"))),
    };
    let seed_policy = match r.u8()? {
        0 => SeedPolicy::VocabOrder,
        1 => SeedPolicy::FrequencyOrder,
        other => return Err(ArtifactError::Corrupt(format!("unknown seed policy tag {other}"))),
    };
    r.take(2)?;
    let vocab_hash: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
    let dim = r.u32()? as usize;
    let vocab_len = r.u32()? as usize;
    let mut vocab = Vocab::new();
    for _ in 0..vocab_len {
        let len = r.u32()? as usize;
        let surface = std::str::from_utf8(r.take(len)?)
            .map_err(|_| ArtifactError::Corrupt("surface is not UTF-8".into()))?;
        match vocab.insert(surface) {
            Ok(Some(_)) => {}
            _ => return Err(ArtifactError::Corrupt(format!("invalid or duplicate surface {surface:?}"))),
        }
    }
    let group_count = r.u32()? as usize;
    let mut groups = Vec::with_capacity(group_count.min(vocab_len));
    for _ in 0..group_count {
        let size = r.u32()? as usize;
        if size > vocab_len {
            return Err(ArtifactError::Corrupt("group larger than vocabulary".into()));
        }
        let members = (0..size).map(|_| r.u32().map(TokenId)).collect::<Result<Vec<_>, _>>()?;
        let d_min = r.f64()?;
        let d_max = r.f64()?;
        let scores = (0..size * size).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
        groups.push(Group::from_parts(members, scores, d_min, d_max));
    }
    if r.pos != body.len() {
        return Err(ArtifactError::Corrupt("trailing bytes after groups".into()));
    }
    Ok(MappingTable::from_parts(k, measure, seed_policy, vocab_hash, dim, vocab, groups)?)
}

pub fn save(mapping: &MappingTable, path: impl AsRef<Path>) -> Result<(), ArtifactError> {
    let mut file = fs::File::create(path)?;
    file.write_all(&encode(mapping))?;
    file.sync_all()?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<MappingTable, ArtifactError> {
    decode(&fs::read(path)?)
}

#[derive(Serialize)]
struct GroupLine<'a> {
    group: usize,
    members: Vec<&'a str>,
    d_min: f64,
    d_max: f64,
    scores: Vec<&'a [f64]>,
}

/// Debug export: one JSON object per group per line.
pub fn write_jsonl<W: Write>(mapping: &MappingTable, mut out: W) -> std::io::Result<()> {
    for (i, group) in mapping.groups().iter().enumerate() {
        let line = GroupLine {
            group: i,
            members: group.members().iter().map(|&t| mapping.surface(t)).collect(),
            d_min: group.d_min(),
            d_max: group.d_max(),
            scores: (0..group.len()).map(|p| group.row(p)).collect(),
        };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_bits().to_le_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ArtifactError> {
        let end = self.pos.checked_add(n).ok_or(ArtifactError::Truncated)?;
        let slice = self.buf.get(self.pos..end).ok_or(ArtifactError::Truncated)?;
        self.pos = end;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8, ArtifactError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, ArtifactError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64, ArtifactError> {
        Ok(f64::from_bits(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::read_embeddings;
    use crate::mapping::{generate_mapping, SeedOrder};

    fn toy_mapping() -> MappingTable {
        let t = read_embeddings("a 0.0\nb 1.0\nc 10.0\nd 11.0\ne 3\n".as_bytes(), None).unwrap();
        generate_mapping(&t, 2, Measure::Euclidean, &SeedOrder::Vocab).unwrap()
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let m = toy_mapping();
        let bytes = encode(&m);
        let back = decode(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(encode(&back), bytes);
    }

    #[test]
    fn rejects_bad_magic_and_corruption() {
        let mut bytes = encode(&toy_mapping());
        assert!(matches!(decode(b"NOTAMAP!xxxxxxxxxxxx"), Err(ArtifactError::BadMagic)));
        assert!(matches!(decode(&bytes[..20]), Err(ArtifactError::Truncated)));
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0xff;
        assert!(matches!(decode(&bytes), Err(ArtifactError::Checksum)));
    }

    #[test]
    fn rejects_unknown_version() {
        let mut bytes = encode(&toy_mapping());
        bytes[8] = 9;
        assert!(matches!(decode(&bytes), Err(ArtifactError::UnsupportedVersion(9))));
    }

    #[test]
    fn jsonl_has_one_line_per_group() {
        let m = toy_mapping();
        let mut out = Vec::new();
        write_jsonl(&m, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), m.groups().len());
        let first: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
        assert_eq!(first["members"], serde_json::json!(["a", "b"]));
        assert_eq!(first["scores"][0], serde_json::json!([0.0, -1.0]));
    }
}
