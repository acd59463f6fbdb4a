//! Binary embedding-sequence file format (`.sqe`).
//!
//! Little-endian layout: magic "SQE1", u32 version (=1), u32 D, u32 T,
//! f32 frame_rate_hz, u8 normalized flag, 3 pad bytes, then T*D f32 values
//! row-major. One file per utterance, named `<site_id>__<sentence_id>.sqe`.

use std::io::{Read, Write};
use std::path::Path;

use crate::embed::EmbeddingSequence;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SQE1";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 24;

pub fn sqe_filename(site_id: &str, sentence_id: u32) -> String {
    format!("{site_id}__{sentence_id}.sqe")
}

/// Recover `(site_id, sentence_id)` from a file name produced by
/// `sqe_filename`. Site ids must not themselves end in `__<digits>`.
pub fn parse_sqe_filename(name: &str) -> Option<(String, u32)> {
    let stem = name.strip_suffix(".sqe")?;
    let (site, sentence) = stem.rsplit_once("__")?;
    let sentence = sentence.parse().ok()?;
    Some((site.to_string(), sentence))
}

pub fn write_sequence(path: &Path, seq: &EmbeddingSequence) -> Result<()> {
    let mut out = Vec::with_capacity(HEADER_LEN + seq.data().len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(seq.dim() as u32).to_le_bytes());
    out.extend_from_slice(&(seq.frames() as u32).to_le_bytes());
    out.extend_from_slice(&seq.frame_rate_hz.to_le_bytes());
    out.push(u8::from(seq.normalized));
    out.extend_from_slice(&[0u8; 3]);
    for v in seq.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&out).map_err(|e| Error::io(path, e))
}

pub fn read_sequence(path: &Path) -> Result<EmbeddingSequence> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let fail = |msg: String| Error::EmbeddingFormat {
        path: path.to_path_buf(),
        msg,
    };
    if bytes.len() < HEADER_LEN {
        return Err(fail("file shorter than header".to_string()));
    }
    if &bytes[0..4] != MAGIC {
        return Err(fail("bad magic".to_string()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(fail(format!("unsupported version {version}")));
    }
    let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let frames = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let frame_rate_hz = f32::from_le_bytes(bytes[16..20].try_into().unwrap());
    let normalized = match bytes[20] {
        0 => false,
        1 => true,
        other => return Err(fail(format!("bad normalized flag {other}"))),
    };
    let expected = HEADER_LEN + frames * dim * 4;
    if bytes.len() != expected {
        return Err(fail(format!(
            "payload size mismatch: {} bytes for T={frames} D={dim} (expected {expected})",
            bytes.len()
        )));
    }
    let data = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(EmbeddingSequence::from_parts(
        data,
        frames,
        dim,
        frame_rate_hz,
        normalized,
    ))
}
