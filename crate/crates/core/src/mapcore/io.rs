//! Binary map files (all integers and floats little-endian):
//!
//! - `SEGP` probability map: magic, version, H, W, C (u32 each), then `H*W*C` f32.
//! - `SEGL` label or pseudo-label map: magic, version, H, W, C, then `H*W` u8 ids
//!   with 255 for VOID / NULL. More than 255 classes is rejected.
//! - `SEGE` entropy map: magic, version, H, W, then `H*W` f32.
//! - `SEGF` feature map: magic, version, H, W, D, then `H*W*D` f32.

use std::fs;
use std::path::Path;

use super::{EntropyMap, FeatureMap, LabelMap, ProbMap, PseudoLabelMap, MAX_CLASSES};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

const MAGIC_PROB: [u8; 4] = *b"SEGP";
const MAGIC_LABEL: [u8; 4] = *b"SEGL";
const MAGIC_ENTROPY: [u8; 4] = *b"SEGE";
const MAGIC_FEATURE: [u8; 4] = *b"SEGF";

struct Header {
    dims: Vec<u32>,
}

fn encode_header(magic: [u8; 4], dims: &[usize]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(8 + 4 * dims.len());
    out.extend_from_slice(&magic);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for &d in dims {
        let d = u32::try_from(d)
            .map_err(|_| Error::DimensionOverflow(format!("dimension {d} exceeds u32")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    Ok(out)
}

/// Parses the header and returns it with the remaining payload slice.
fn decode_header(bytes: &[u8], magic: [u8; 4], ndims: usize) -> Result<(Header, &[u8])> {
    let header_len = 8 + 4 * ndims;
    if bytes.len() < 4 {
        return Err(Error::Truncated {
            expected: header_len as u64,
            actual: bytes.len() as u64,
        });
    }
    let found: [u8; 4] = bytes[..4].try_into().unwrap();
    if found != magic {
        return Err(Error::BadMagic {
            expected: magic,
            found,
        });
    }
    if bytes.len() < header_len {
        return Err(Error::Truncated {
            expected: header_len as u64,
            actual: bytes.len() as u64,
        });
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap());
    let version = word(0);
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let dims = (1..=ndims).map(word).collect();
    Ok((Header { dims }, &bytes[header_len..]))
}

/// Number of payload bytes implied by `dims` and `elem` bytes per element.
fn payload_len(dims: &[u32], elem: u64) -> Result<u64> {
    dims.iter()
        .try_fold(elem, |acc, &d| acc.checked_mul(d as u64))
        .filter(|&n| usize::try_from(n).is_ok())
        .ok_or_else(|| Error::DimensionOverflow(format!("{dims:?} x {elem} bytes")))
}

fn check_payload(payload: &[u8], expected: u64) -> Result<()> {
    let actual = payload.len() as u64;
    if actual < expected {
        return Err(Error::Truncated { expected, actual });
    }
    if actual > expected {
        return Err(Error::TrailingBytes(actual - expected));
    }
    Ok(())
}

fn decode_f32(payload: &[u8]) -> Vec<f32> {
    payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect()
}

fn encode_f32(out: &mut Vec<u8>, values: &[f32]) {
    out.reserve(values.len() * 4);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn to_usize(d: u32) -> usize {
    d as usize
}

pub fn write_probmap(map: &ProbMap, path: impl AsRef<Path>) -> Result<()> {
    let mut out = encode_header(
        MAGIC_PROB,
        &[map.height(), map.width(), map.num_classes()],
    )?;
    encode_f32(&mut out, map.values());
    write_bytes(path.as_ref(), &out)
}

pub fn read_probmap(path: impl AsRef<Path>) -> Result<ProbMap> {
    decode_probmap(&read_bytes(path.as_ref())?)
}

pub(crate) fn decode_probmap(bytes: &[u8]) -> Result<ProbMap> {
    let (header, payload) = decode_header(bytes, MAGIC_PROB, 3)?;
    check_payload(payload, payload_len(&header.dims, 4)?)?;
    let [h, w, c] = [0, 1, 2].map(|i| to_usize(header.dims[i]));
    ProbMap::new(h, w, c, decode_f32(payload))
}

fn encode_labels(h: usize, w: usize, c: usize, labels: &[u8]) -> Result<Vec<u8>> {
    if c > MAX_CLASSES {
        return Err(Error::InvalidArgument(format!(
            "{c} classes exceed the label file limit of {MAX_CLASSES}"
        )));
    }
    let mut out = encode_header(MAGIC_LABEL, &[h, w, c])?;
    out.extend_from_slice(labels);
    Ok(out)
}

fn decode_labels(bytes: &[u8]) -> Result<(usize, usize, usize, Vec<u8>)> {
    let (header, payload) = decode_header(bytes, MAGIC_LABEL, 3)?;
    let c = to_usize(header.dims[2]);
    if c > MAX_CLASSES {
        return Err(Error::InvalidArgument(format!(
            "label file declares {c} classes, limit is {MAX_CLASSES}"
        )));
    }
    check_payload(payload, payload_len(&header.dims[..2], 1)?)?;
    Ok((
        to_usize(header.dims[0]),
        to_usize(header.dims[1]),
        c,
        payload.to_vec(),
    ))
}

pub fn write_labelmap(map: &LabelMap, path: impl AsRef<Path>) -> Result<()> {
    let out = encode_labels(map.height(), map.width(), map.num_classes(), map.labels())?;
    write_bytes(path.as_ref(), &out)
}

pub fn read_labelmap(path: impl AsRef<Path>) -> Result<LabelMap> {
    let (h, w, c, labels) = decode_labels(&read_bytes(path.as_ref())?)?;
    LabelMap::new(h, w, c, labels)
}

pub fn write_pseudolabels(map: &PseudoLabelMap, path: impl AsRef<Path>) -> Result<()> {
    let out = encode_labels(map.height(), map.width(), map.num_classes(), map.labels())?;
    write_bytes(path.as_ref(), &out)
}

pub fn read_pseudolabels(path: impl AsRef<Path>) -> Result<PseudoLabelMap> {
    let (h, w, c, labels) = decode_labels(&read_bytes(path.as_ref())?)?;
    PseudoLabelMap::new(h, w, c, labels)
}

pub fn write_entropymap(map: &EntropyMap, path: impl AsRef<Path>) -> Result<()> {
    let mut out = encode_header(MAGIC_ENTROPY, &[map.height(), map.width()])?;
    encode_f32(&mut out, map.values());
    write_bytes(path.as_ref(), &out)
}

pub fn read_entropymap(path: impl AsRef<Path>) -> Result<EntropyMap> {
    let bytes = read_bytes(path.as_ref())?;
    let (header, payload) = decode_header(&bytes, MAGIC_ENTROPY, 2)?;
    check_payload(payload, payload_len(&header.dims, 4)?)?;
    EntropyMap::new(
        to_usize(header.dims[0]),
        to_usize(header.dims[1]),
        decode_f32(payload),
    )
}

pub fn write_featuremap(map: &FeatureMap, path: impl AsRef<Path>) -> Result<()> {
    let mut out = encode_header(MAGIC_FEATURE, &[map.height(), map.width(), map.dim()])?;
    encode_f32(&mut out, map.values());
    write_bytes(path.as_ref(), &out)
}

pub fn read_featuremap(path: impl AsRef<Path>) -> Result<FeatureMap> {
    let bytes = read_bytes(path.as_ref())?;
    let (header, payload) = decode_header(&bytes, MAGIC_FEATURE, 3)?;
    check_payload(payload, payload_len(&header.dims, 4)?)?;
    let [h, w, d] = [0, 1, 2].map(|i| to_usize(header.dims[i]));
    FeatureMap::new(h, w, d, decode_f32(payload))
}
