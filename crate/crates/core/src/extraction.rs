//! Pseudo-label extraction from probability maps and per-class thresholds.
//!
//! A pixel receives its argmax class `c` if its confidence passes class `c`'s
//! threshold strictly: `max score > mu[c]` for softmax thresholds, `entropy <
//! nu[c]` for entropy thresholds. Every other pixel gets [`NULL`].

use serde::{Deserialize, Serialize};

use crate::confidence::ConfidenceKind;
use crate::error::{Error, Result};
use crate::mapcore::{
    argmax, same_classes, same_shape, ClassMap, EntropyMap, ProbMap, PseudoLabelMap, NULL,
};
use crate::thresholds::ClassThresholds;

fn expect_kind(t: &ClassThresholds, kind: ConfidenceKind) -> Result<()> {
    if t.kind() != kind {
        return Err(Error::KindMismatch {
            expected: kind.name(),
            found: t.kind().name(),
        });
    }
    Ok(())
}

/// Softmax-score pseudo-labels.
pub fn extract_ssl(prob: &ProbMap, mu: &ClassThresholds) -> Result<PseudoLabelMap> {
    expect_kind(mu, ConfidenceKind::Softmax)?;
    same_classes("softmax thresholds", mu.num_classes(), prob.num_classes())?;
    let thresholds = mu.values();
    let labels = prob
        .pixels()
        .map(|p| {
            let c = argmax(p);
            if f64::from(p[c]) > thresholds[c] {
                c as u8
            } else {
                NULL
            }
        })
        .collect();
    PseudoLabelMap::new(prob.height(), prob.width(), prob.num_classes(), labels)
}

/// Entropy pseudo-labels. `ent` must be the entropy map of `prob`.
pub fn extract_esl(
    prob: &ProbMap,
    ent: &EntropyMap,
    nu: &ClassThresholds,
) -> Result<PseudoLabelMap> {
    expect_kind(nu, ConfidenceKind::Entropy)?;
    same_classes("entropy thresholds", nu.num_classes(), prob.num_classes())?;
    same_shape(
        "entropy map",
        (prob.height(), prob.width()),
        (ent.height(), ent.width()),
    )?;
    let thresholds = nu.values();
    let labels = prob
        .pixels()
        .zip(ent.values())
        .map(|(p, &e)| {
            let c = argmax(p);
            if f64::from(e) < thresholds[c] {
                c as u8
            } else {
                NULL
            }
        })
        .collect();
    PseudoLabelMap::new(prob.height(), prob.width(), prob.num_classes(), labels)
}

/// Per-pixel relation between an SSL and an ESL pseudo-label map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
#[repr(u8)]
pub enum DiffCategory {
    BothNull = 0,
    Agree = 1,
    SslOnly = 2,
    EslOnly = 3,
    Conflict = 4,
}

impl DiffCategory {
    pub const ALL: [DiffCategory; 5] = [
        DiffCategory::BothNull,
        DiffCategory::Agree,
        DiffCategory::SslOnly,
        DiffCategory::EslOnly,
        DiffCategory::Conflict,
    ];

    pub fn classify(ssl: Option<usize>, esl: Option<usize>) -> Self {
        match (ssl, esl) {
            (None, None) => DiffCategory::BothNull,
            (Some(a), Some(b)) if a == b => DiffCategory::Agree,
            (Some(_), Some(_)) => DiffCategory::Conflict,
            (Some(_), None) => DiffCategory::SslOnly,
            (None, Some(_)) => DiffCategory::EslOnly,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffCounts {
    pub both_null: u64,
    pub agree: u64,
    pub ssl_only: u64,
    pub esl_only: u64,
    pub conflict: u64,
}

impl DiffCounts {
    fn bump(&mut self, cat: DiffCategory) {
        match cat {
            DiffCategory::BothNull => self.both_null += 1,
            DiffCategory::Agree => self.agree += 1,
            DiffCategory::SslOnly => self.ssl_only += 1,
            DiffCategory::EslOnly => self.esl_only += 1,
            DiffCategory::Conflict => self.conflict += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.both_null + self.agree + self.ssl_only + self.esl_only + self.conflict
    }

    pub fn add(&mut self, other: &DiffCounts) {
        self.both_null += other.both_null;
        self.agree += other.agree;
        self.ssl_only += other.ssl_only;
        self.esl_only += other.esl_only;
        self.conflict += other.conflict;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabelDiff {
    pub height: usize,
    pub width: usize,
    pub categories: Vec<DiffCategory>,
    pub counts: DiffCounts,
}

pub fn pseudo_label_diff(ssl: &PseudoLabelMap, esl: &PseudoLabelMap) -> Result<PseudoLabelDiff> {
    same_shape(
        "pseudo-label diff",
        (ssl.height(), ssl.width()),
        (esl.height(), esl.width()),
    )?;
    let mut counts = DiffCounts::default();
    let categories = (0..ssl.num_pixels())
        .map(|i| {
            let cat = DiffCategory::classify(ssl.class_at(i), esl.class_at(i));
            counts.bump(cat);
            cat
        })
        .collect();
    Ok(PseudoLabelDiff {
        height: ssl.height(),
        width: ssl.width(),
        categories,
        counts,
    })
}

/// Labeled fraction and per-class histogram of a pseudo-label map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub labeled_fraction: f64,
    pub labeled: u64,
    pub total: u64,
    pub per_class: Vec<u64>,
}

impl Coverage {
    pub fn empty(num_classes: usize) -> Self {
        Self {
            labeled_fraction: 0.0,
            labeled: 0,
            total: 0,
            per_class: vec![0; num_classes],
        }
    }

    /// Pools another map's counts into this one.
    pub fn add(&mut self, other: &Coverage) {
        self.labeled += other.labeled;
        self.total += other.total;
        for (a, b) in self.per_class.iter_mut().zip(&other.per_class) {
            *a += b;
        }
        self.labeled_fraction = if self.total == 0 {
            0.0
        } else {
            self.labeled as f64 / self.total as f64
        };
    }
}

pub fn coverage(map: &PseudoLabelMap) -> Coverage {
    let mut per_class = vec![0u64; map.num_classes()];
    for i in 0..map.num_pixels() {
        if let Some(c) = map.class_at(i) {
            per_class[c] += 1;
        }
    }
    let labeled: u64 = per_class.iter().sum();
    let total = map.num_pixels() as u64;
    Coverage {
        labeled_fraction: if total == 0 {
            0.0
        } else {
            labeled as f64 / total as f64
        },
        labeled,
        total,
        per_class,
    }
}
