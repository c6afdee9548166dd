//! Checkpoint file: one line of JSON header, a newline, then the classifier
//! weights followed by the discriminator weights as little-endian f64.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Discriminator, PixelClassifier};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "entroseg-checkpoint";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub version: u32,
    pub feature_dim: usize,
    pub num_classes: usize,
    pub config_hash: String,
    pub classifier_len: usize,
    pub discriminator_len: usize,
}

pub fn write_checkpoint(
    path: impl AsRef<Path>,
    clf: &PixelClassifier,
    disc: &Discriminator,
    config_hash: &str,
) -> Result<()> {
    let path = path.as_ref();
    let header = CheckpointHeader {
        format: CHECKPOINT_FORMAT.into(),
        version: 1,
        feature_dim: clf.feature_dim(),
        num_classes: clf.num_classes(),
        config_hash: config_hash.into(),
        classifier_len: clf.weights().len(),
        discriminator_len: disc.weights().len(),
    };
    let mut bytes = serde_json::to_vec(&header).map_err(|e| Error::json(path, e))?;
    bytes.push(b'\n');
    for w in clf.weights().iter().chain(disc.weights()) {
        bytes.extend_from_slice(&w.to_le_bytes());
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(
    path: impl AsRef<Path>,
) -> Result<(CheckpointHeader, PixelClassifier, Discriminator)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let split = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::InvalidArgument(format!("{}: missing header", path.display())))?;
    let header: CheckpointHeader =
        serde_json::from_slice(&bytes[..split]).map_err(|e| Error::json(path, e))?;
    if header.format != CHECKPOINT_FORMAT || header.version != 1 {
        return Err(Error::InvalidArgument(format!(
            "{}: not a version 1 checkpoint",
            path.display()
        )));
    }
    let payload = &bytes[split + 1..];
    let expected = (header.classifier_len + header.discriminator_len) as u64 * 8;
    if (payload.len() as u64) < expected {
        return Err(Error::Truncated {
            expected,
            actual: payload.len() as u64,
        });
    }
    if (payload.len() as u64) > expected {
        return Err(Error::TrailingBytes(payload.len() as u64 - expected));
    }
    let mut floats = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let clf_weights: Vec<f64> = floats.by_ref().take(header.classifier_len).collect();
    let disc_weights: Vec<f64> = floats.collect();
    let clf = PixelClassifier::from_weights(header.feature_dim, header.num_classes, clf_weights)?;
    let disc = Discriminator::from_weights(disc_weights)?;
    if disc.num_classes() != header.num_classes {
        return Err(Error::DimensionMismatch(
            "discriminator and classifier disagree on class count".into(),
        ));
    }
    Ok((header, clf, disc))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ckpt.bin");
        let clf = PixelClassifier::random(3, 4, 0.5, 9);
        let disc = Discriminator::from_weights(vec![0.1, -0.2, 0.3, 0.4, -1e-9]).unwrap();
        write_checkpoint(&p, &clf, &disc, "abc").unwrap();
        let (h, c2, d2) = read_checkpoint(&p).unwrap();
        assert_eq!(h.config_hash, "abc");
        assert_eq!(c2, clf);
        assert_eq!(d2, disc);

        let mut bytes = std::fs::read(&p).unwrap();
        bytes.pop();
        std::fs::write(&p, bytes).unwrap();
        assert!(matches!(read_checkpoint(&p), Err(Error::Truncated { .. })));
    }
}
