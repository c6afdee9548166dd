//! Per-pixel confidence: normalized Shannon entropy and maximum softmax score.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mapcore::{EntropyMap, ProbMap, ENTROPY_SLACK};

/// Which confidence measure a threshold or sample set refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConfidenceKind {
    /// Maximum softmax score; higher is more confident.
    Softmax,
    /// Normalized entropy; lower is more confident.
    Entropy,
}

impl ConfidenceKind {
    pub fn name(self) -> &'static str {
        match self {
            ConfidenceKind::Softmax => "softmax",
            ConfidenceKind::Entropy => "entropy",
        }
    }
}

/// Entropy of `p / sum(p)` divided by `ln C`, with `0 ln 0 = 0`.
///
/// Entries are summed in ascending order so the result does not depend on the
/// order of `p`. `scratch` receives the sorted copy.
fn raw_normalized_entropy(p: impl Iterator<Item = f64>, scratch: &mut Vec<f64>) -> f64 {
    scratch.clear();
    scratch.extend(p);
    scratch.sort_unstable_by(f64::total_cmp);
    let total: f64 = scratch.iter().sum();
    let mut h = 0.0f64;
    for &v in scratch.iter() {
        if v > 0.0 {
            let q = v / total;
            h -= q * q.ln();
        }
    }
    h / (scratch.len() as f64).ln()
}

fn clamp_entropy(raw: f64) -> Result<f64> {
    if !(-ENTROPY_SLACK..=1.0 + ENTROPY_SLACK).contains(&raw) {
        return Err(Error::Invariant(format!(
            "normalized entropy {raw} outside [0, 1]"
        )));
    }
    Ok(raw.clamp(0.0, 1.0))
}

/// Normalized entropy of a probability vector (`C >= 2`).
pub fn entropy_of_distribution(p: &[f64]) -> Result<f64> {
    if p.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "entropy needs at least 2 classes, got {}",
            p.len()
        )));
    }
    if let Some(v) = p.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::InvalidArgument(format!(
            "probability {v} outside [0, 1]"
        )));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > crate::mapcore::PIXEL_SUM_TOLERANCE {
        return Err(Error::InvalidArgument(format!(
            "probabilities sum to {sum}"
        )));
    }
    let mut scratch = Vec::with_capacity(p.len());
    clamp_entropy(raw_normalized_entropy(p.iter().copied(), &mut scratch))
}

/// Per-pixel normalized entropy of a valid probability map.
pub fn entropy_map(map: &ProbMap) -> Result<EntropyMap> {
    let c = map.num_classes();
    if c < 2 {
        return Err(Error::InvalidArgument(format!(
            "entropy needs at least 2 classes, got {c}"
        )));
    }
    let values = map
        .values()
        .par_chunks_exact(c)
        .map_init(
            || Vec::with_capacity(c),
            |scratch, pixel| {
                clamp_entropy(raw_normalized_entropy(
                    pixel.iter().map(|&v| v as f64),
                    scratch,
                ))
                .map(|e| e as f32)
            },
        )
        .collect::<Result<Vec<f32>>>()?;
    EntropyMap::new(map.height(), map.width(), values)
}

/// Per-pixel confidence value of the requested kind, widened to `f64` exactly.
pub fn confidence_values(
    map: &ProbMap,
    kind: ConfidenceKind,
    entropy: Option<&EntropyMap>,
) -> Result<Vec<f64>> {
    match kind {
        ConfidenceKind::Softmax => Ok(map.max_score_map().into_iter().map(f64::from).collect()),
        ConfidenceKind::Entropy => {
            let owned;
            let ent = match entropy {
                Some(e) => {
                    crate::mapcore::same_shape(
                        "entropy map",
                        (map.height(), map.width()),
                        (e.height(), e.width()),
                    )?;
                    e
                }
                None => {
                    owned = entropy_map(map)?;
                    &owned
                }
            };
            Ok(ent.values().iter().map(|&v| f64::from(v)).collect())
        }
    }
}
