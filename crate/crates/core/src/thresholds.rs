//! Dataset-wide per-class confidence thresholds.
//!
//! Samples are gathered per predicted (argmax) class over a whole target set.
//! The softmax threshold of class `c` is `min(mu_star, median_c)`, the entropy
//! threshold is `max(nu_star, median_c)`.
//!
//! The median of an even-sized sample set is the lower median *in confidence
//! order*: for softmax scores the element at sorted index `ceil(n/2) - 1`, for
//! entropies (where lower is more confident) the element at index `floor(n/2)`.
//! Together with the strict comparisons used at extraction time this keeps at
//! least `floor(n/2)` of the class's pixels when samples are tie-free.
//!
//! Classes that never appear as argmax fall back to the hyperparameter itself.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::confidence::{confidence_values, ConfidenceKind};
use crate::error::{Error, Result};
use crate::mapcore::{same_classes, EntropyMap, ProbMap};

/// Confidence samples grouped by the argmax class of the pixel they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassSampleBag {
    kind: ConfidenceKind,
    samples: Vec<Vec<f64>>,
}

impl ClassSampleBag {
    pub fn new(kind: ConfidenceKind, num_classes: usize) -> Self {
        Self {
            kind,
            samples: vec![Vec::new(); num_classes],
        }
    }

    pub fn kind(&self) -> ConfidenceKind {
        self.kind
    }

    pub fn num_classes(&self) -> usize {
        self.samples.len()
    }

    pub fn samples(&self, class: usize) -> &[f64] {
        &self.samples[class]
    }

    pub fn counts(&self) -> Vec<u64> {
        self.samples.iter().map(|s| s.len() as u64).collect()
    }

    /// Adds one sample per pixel of `prob` to the bag of its argmax class.
    pub fn accumulate(&mut self, prob: &ProbMap) -> Result<()> {
        self.accumulate_with_entropy(prob, None)
    }

    /// Like [`accumulate`](Self::accumulate), reusing a precomputed entropy map
    /// for entropy bags.
    pub fn accumulate_with_entropy(
        &mut self,
        prob: &ProbMap,
        entropy: Option<&EntropyMap>,
    ) -> Result<()> {
        same_classes("sample bag", self.num_classes(), prob.num_classes())?;
        let values = confidence_values(prob, self.kind, entropy)?;
        for (label, value) in prob.argmax_map().labels().iter().zip(values) {
            self.samples[*label as usize].push(value);
        }
        Ok(())
    }

    /// Per-class multiset union.
    pub fn merge(mut self, other: ClassSampleBag) -> Result<ClassSampleBag> {
        if self.kind != other.kind {
            return Err(Error::KindMismatch {
                expected: self.kind.name(),
                found: other.kind.name(),
            });
        }
        same_classes("merge", self.num_classes(), other.num_classes())?;
        for (mine, theirs) in self.samples.iter_mut().zip(other.samples) {
            mine.extend(theirs);
        }
        Ok(self)
    }

    fn median(&self, class: usize) -> Option<f64> {
        let samples = &self.samples[class];
        let n = samples.len();
        if n == 0 {
            return None;
        }
        let index = match self.kind {
            ConfidenceKind::Softmax => n.div_ceil(2) - 1,
            ConfidenceKind::Entropy => n / 2,
        };
        let mut scratch = samples.clone();
        let (_, median, _) = scratch.select_nth_unstable_by(index, f64::total_cmp);
        Some(*median)
    }
}

/// Per-class thresholds together with the statistics they were derived from.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassThresholds {
    kind: ConfidenceKind,
    hyper: f64,
    values: Vec<f64>,
    counts: Vec<u64>,
    medians: Vec<Option<f64>>,
}

fn expect_kind(bag: &ClassSampleBag, kind: ConfidenceKind) -> Result<()> {
    if bag.kind != kind {
        return Err(Error::KindMismatch {
            expected: kind.name(),
            found: bag.kind.name(),
        });
    }
    Ok(())
}

fn check_hyper(name: &str, value: f64) -> Result<()> {
    if !(value > 0.0 && value <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "{name} must lie in (0, 1], got {value}"
        )));
    }
    Ok(())
}

impl ClassThresholds {
    fn from_bag(bag: &ClassSampleBag, hyper: f64) -> Self {
        let medians: Vec<Option<f64>> = (0..bag.num_classes()).map(|c| bag.median(c)).collect();
        let values = medians
            .iter()
            .map(|m| match (bag.kind, m) {
                (_, None) => hyper,
                (ConfidenceKind::Softmax, Some(m)) => m.min(hyper),
                (ConfidenceKind::Entropy, Some(m)) => m.max(hyper),
            })
            .collect();
        Self {
            kind: bag.kind,
            hyper,
            values,
            counts: bag.counts(),
            medians,
        }
    }

    /// Softmax thresholds `min(mu_star, median)`.
    pub fn compute_mu(bag: &ClassSampleBag, mu_star: f64) -> Result<Self> {
        expect_kind(bag, ConfidenceKind::Softmax)?;
        check_hyper("mu_star", mu_star)?;
        Ok(Self::from_bag(bag, mu_star))
    }

    /// Entropy thresholds `max(nu_star, median)`.
    pub fn compute_nu(bag: &ClassSampleBag, nu_star: f64) -> Result<Self> {
        expect_kind(bag, ConfidenceKind::Entropy)?;
        check_hyper("nu_star", nu_star)?;
        Ok(Self::from_bag(bag, nu_star))
    }

    /// Entropy thresholds equal to the plain per-class median (no clamp).
    ///
    /// Stored with `hyper == 0`, which is the clamp that never binds; classes
    /// without samples then admit no pixel.
    pub fn median_only(bag: &ClassSampleBag) -> Result<Self> {
        expect_kind(bag, ConfidenceKind::Entropy)?;
        Ok(Self::from_bag(bag, 0.0))
    }

    /// Builds thresholds directly from values, e.g. for hand-made tests.
    pub fn from_values(kind: ConfidenceKind, hyper: f64, values: Vec<f64>) -> Self {
        let n = values.len();
        Self {
            kind,
            hyper,
            values,
            counts: vec![0; n],
            medians: vec![None; n],
        }
    }

    pub fn kind(&self) -> ConfidenceKind {
        self.kind
    }

    pub fn hyper(&self) -> f64 {
        self.hyper
    }

    pub fn num_classes(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn medians(&self) -> &[Option<f64>] {
        &self.medians
    }

    pub fn is_median_only(&self) -> bool {
        self.hyper == 0.0
    }

    /// Whether class `c`'s threshold came from the hyperparameter rather than its median.
    pub fn clamped(&self, c: usize) -> bool {
        match (self.kind, self.medians[c]) {
            (_, None) => true,
            (ConfidenceKind::Softmax, Some(m)) => m > self.hyper,
            (ConfidenceKind::Entropy, Some(m)) => m < self.hyper,
        }
    }

    pub fn report(&self) -> ThresholdsReport {
        thresholds_report(self)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(&self.report()).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let report: ThresholdsReport =
            serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        Self::try_from(report)
    }
}

/// Status of a class row in a thresholds report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassStatus {
    Ok,
    NoSamples,
}

/// One class row of [`ThresholdsReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassThresholdRow {
    pub id: usize,
    pub count: u64,
    pub median: Option<f64>,
    pub threshold: f64,
    pub clamped: bool,
    #[serde(default = "default_status")]
    pub status: ClassStatus,
}

fn default_status() -> ClassStatus {
    ClassStatus::Ok
}

/// Serialized form of [`ClassThresholds`]; also the on-disk thresholds JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdsReport {
    pub kind: ConfidenceKind,
    pub hyper: f64,
    pub classes: Vec<ClassThresholdRow>,
}

pub fn thresholds_report(t: &ClassThresholds) -> ThresholdsReport {
    let classes = (0..t.num_classes())
        .map(|c| ClassThresholdRow {
            id: c,
            count: t.counts[c],
            median: t.medians[c],
            threshold: t.values[c],
            clamped: t.clamped(c),
            status: if t.counts[c] == 0 {
                ClassStatus::NoSamples
            } else {
                ClassStatus::Ok
            },
        })
        .collect();
    ThresholdsReport {
        kind: t.kind,
        hyper: t.hyper,
        classes,
    }
}

impl TryFrom<ThresholdsReport> for ClassThresholds {
    type Error = Error;

    fn try_from(report: ThresholdsReport) -> Result<Self> {
        for (i, row) in report.classes.iter().enumerate() {
            if row.id != i {
                return Err(Error::InvalidArgument(format!(
                    "thresholds row {i} carries id {}",
                    row.id
                )));
            }
        }
        Ok(Self {
            kind: report.kind,
            hyper: report.hyper,
            values: report.classes.iter().map(|r| r.threshold).collect(),
            counts: report.classes.iter().map(|r| r.count).collect(),
            medians: report.classes.iter().map(|r| r.median).collect(),
        })
    }
}

impl ThresholdsReport {
    /// Plain-text table, one row per class.
    pub fn to_text(&self) -> String {
        let mut out = format!("kind={} hyper={}\n", self.kind.name(), self.hyper);
        out.push_str("class     count    median  threshold  note\n");
        for row in &self.classes {
            let median = row
                .median
                .map(|m| format!("{m:.4}"))
                .unwrap_or_else(|| "-".into());
            let note = match (row.status, row.clamped) {
                (ClassStatus::NoSamples, _) => "no-samples",
                (_, true) => "clamped",
                _ => "",
            };
            out.push_str(&format!(
                "{:>5} {:>9} {:>9} {:>10.4}  {}\n",
                row.id, row.count, median, row.threshold, note
            ));
        }
        out
    }
}
