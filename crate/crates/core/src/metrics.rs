//! Segmentation evaluation: confusion matrices, IoU / mIoU, incorrect-prediction
//! ratios of pseudo-labels and relative changes between two reports.
//!
//! Undefined entries (zero denominators) are `None`, excluded from means, and
//! serialized as JSON `null` / empty CSV cells.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extraction::Coverage;
use crate::mapcore::{same_classes, same_shape, ClassMap, LabelMap, PseudoLabelMap};

/// Pixel tallies, rows indexed by ground truth and columns by prediction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    num_classes: usize,
    counts: Vec<u64>,
    /// Ground-truth pixels whose prediction is the sentinel, per ground-truth class.
    unpredicted: Vec<u64>,
    void_pixels: u64,
}

impl ConfusionMatrix {
    pub fn new(num_classes: usize) -> Self {
        Self {
            num_classes,
            counts: vec![0; num_classes * num_classes],
            unpredicted: vec![0; num_classes],
            void_pixels: 0,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn get(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.num_classes + pred]
    }

    pub fn unpredicted(&self, gt: usize) -> u64 {
        self.unpredicted[gt]
    }

    pub fn void_pixels(&self) -> u64 {
        self.void_pixels
    }

    /// Pixels with a defined ground truth.
    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.unpredicted.iter().sum::<u64>()
    }

    /// Tallies one map pair into this matrix.
    pub fn accumulate<P: ClassMap>(&mut self, pred: &P, gt: &LabelMap) -> Result<()> {
        same_shape(
            "confusion",
            (pred.height(), pred.width()),
            (gt.height(), gt.width()),
        )?;
        same_classes("confusion", self.num_classes, gt.num_classes())?;
        same_classes("confusion", self.num_classes, pred.num_classes())?;
        let c = self.num_classes;
        for i in 0..gt.num_pixels() {
            match (gt.class_at(i), pred.class_at(i)) {
                (None, _) => self.void_pixels += 1,
                (Some(g), Some(p)) => self.counts[g * c + p] += 1,
                (Some(g), None) => self.unpredicted[g] += 1,
            }
        }
        Ok(())
    }

    /// Elementwise sum.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        same_classes("confusion merge", self.num_classes, other.num_classes)?;
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        for (a, b) in self.unpredicted.iter_mut().zip(&other.unpredicted) {
            *a += b;
        }
        self.void_pixels += other.void_pixels;
        Ok(())
    }
}

/// Confusion matrix of a single map pair.
pub fn confusion<P: ClassMap>(pred: &P, gt: &LabelMap) -> Result<ConfusionMatrix> {
    let mut cm = ConfusionMatrix::new(gt.num_classes());
    cm.accumulate(pred, gt)?;
    Ok(cm)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IouReport {
    pub per_class: Vec<Option<f64>>,
    pub miou: Option<f64>,
}

fn mean_defined(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let (sum, n) = values
        .flatten()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// `TP / (TP + FP + FN)` per class; prediction sentinels count as false negatives.
pub fn iou(cm: &ConfusionMatrix) -> IouReport {
    iou_masked(cm, None)
}

/// IoU with the mean restricted to classes whose `mask` entry is true.
pub fn iou_masked(cm: &ConfusionMatrix, mask: Option<&[bool]>) -> IouReport {
    let c = cm.num_classes;
    let per_class: Vec<Option<f64>> = (0..c)
        .map(|k| {
            let tp = cm.get(k, k);
            let fn_: u64 = (0..c).filter(|&p| p != k).map(|p| cm.get(k, p)).sum::<u64>()
                + cm.unpredicted[k];
            let fp: u64 = (0..c).filter(|&g| g != k).map(|g| cm.get(g, k)).sum();
            let denom = tp + fp + fn_;
            (denom > 0).then(|| tp as f64 / denom as f64)
        })
        .collect();
    let miou = mean_defined(
        per_class
            .iter()
            .enumerate()
            .map(|(k, v)| v.filter(|_| mask.is_none_or(|m| m[k]))),
    );
    IouReport { per_class, miou }
}

/// Fraction of pseudo-labeled pixels whose label disagrees with ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncorrectRatios {
    pub per_class: Vec<Option<f64>>,
    pub labeled: Vec<u64>,
    pub wrong: Vec<u64>,
    pub global: Option<f64>,
}

impl IncorrectRatios {
    pub fn new(num_classes: usize) -> Self {
        Self {
            per_class: vec![None; num_classes],
            labeled: vec![0; num_classes],
            wrong: vec![0; num_classes],
            global: None,
        }
    }

    /// Adds one map pair's counts and refreshes the ratios.
    pub fn accumulate(&mut self, pseudo: &PseudoLabelMap, gt: &LabelMap) -> Result<()> {
        same_shape(
            "incorrect ratio",
            (pseudo.height(), pseudo.width()),
            (gt.height(), gt.width()),
        )?;
        same_classes("incorrect ratio", self.labeled.len(), pseudo.num_classes())?;
        same_classes("incorrect ratio", self.labeled.len(), gt.num_classes())?;
        for i in 0..gt.num_pixels() {
            if let (Some(p), Some(g)) = (pseudo.class_at(i), gt.class_at(i)) {
                self.labeled[p] += 1;
                if p != g {
                    self.wrong[p] += 1;
                }
            }
        }
        self.refresh();
        Ok(())
    }

    fn refresh(&mut self) {
        self.per_class = self
            .labeled
            .iter()
            .zip(&self.wrong)
            .map(|(&n, &w)| (n > 0).then(|| w as f64 / n as f64))
            .collect();
        let n: u64 = self.labeled.iter().sum();
        let w: u64 = self.wrong.iter().sum();
        self.global = (n > 0).then(|| w as f64 / n as f64);
    }
}

pub fn incorrect_ratio(pseudo: &PseudoLabelMap, gt: &LabelMap) -> Result<IncorrectRatios> {
    let mut r = IncorrectRatios::new(gt.num_classes());
    r.accumulate(pseudo, gt)?;
    Ok(r)
}

/// `100 * (new - base) / base`, undefined when either side is or `base` is zero.
pub fn relative_change_pct(new: Option<f64>, base: Option<f64>) -> Option<f64> {
    match (new, base) {
        (Some(n), Some(b)) if b != 0.0 => Some(100.0 * (n - b) / b),
        _ => None,
    }
}

/// Evaluation summary of one model or one pseudo-label set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub num_classes: usize,
    pub per_class_iou: Vec<Option<f64>>,
    pub miou: Option<f64>,
    pub per_class_incorrect_ratio: Vec<Option<f64>>,
    pub global_incorrect_ratio: Option<f64>,
    pub coverage: Option<Coverage>,
}

impl MetricsReport {
    pub fn from_iou(iou: IouReport) -> Self {
        let n = iou.per_class.len();
        Self {
            num_classes: n,
            per_class_iou: iou.per_class,
            miou: iou.miou,
            per_class_incorrect_ratio: vec![None; n],
            global_incorrect_ratio: None,
            coverage: None,
        }
    }

    pub fn with_pseudo_quality(mut self, ratios: &IncorrectRatios, coverage: Coverage) -> Self {
        self.per_class_incorrect_ratio = ratios.per_class.clone();
        self.global_incorrect_ratio = ratios.global;
        self.coverage = Some(coverage);
        self
    }

    /// CSV with columns `id,iou,incorrect_ratio,count` and a trailing `global` row.
    pub fn to_csv(&self) -> String {
        let cell = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
        let mut out = String::from("id,iou,incorrect_ratio,count\n");
        for c in 0..self.num_classes {
            let count = self
                .coverage
                .as_ref()
                .map(|cov| cov.per_class[c].to_string())
                .unwrap_or_default();
            let _ = writeln!(
                out,
                "{c},{},{},{count}",
                cell(self.per_class_iou[c]),
                cell(self.per_class_incorrect_ratio[c])
            );
        }
        let total = self
            .coverage
            .as_ref()
            .map(|cov| cov.labeled.to_string())
            .unwrap_or_default();
        let _ = writeln!(
            out,
            "global,{},{},{total}",
            cell(self.miou),
            cell(self.global_incorrect_ratio)
        );
        out
    }

    /// Percentages with one decimal, `-` for undefined entries.
    pub fn to_text(&self) -> String {
        let pct = |v: Option<f64>| {
            v.map(|x| format!("{:.1}", 100.0 * x))
                .unwrap_or_else(|| "-".into())
        };
        let mut out = String::from("class    IoU%  incorrect%\n");
        for c in 0..self.num_classes {
            let _ = writeln!(
                out,
                "{c:>5} {:>7} {:>11}",
                pct(self.per_class_iou[c]),
                pct(self.per_class_incorrect_ratio[c])
            );
        }
        let _ = writeln!(
            out,
            "  all {:>7} {:>11}",
            pct(self.miou),
            pct(self.global_incorrect_ratio)
        );
        out
    }
}

/// Signed percentage changes of `new` relative to `base`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelativeChange {
    pub per_class_iou: Vec<Option<f64>>,
    pub miou: Option<f64>,
    pub per_class_incorrect_ratio: Vec<Option<f64>>,
    pub global_incorrect_ratio: Option<f64>,
}

pub fn relative_change(new: &MetricsReport, base: &MetricsReport) -> Result<RelativeChange> {
    if new.num_classes != base.num_classes {
        return Err(Error::DimensionMismatch(format!(
            "relative change: {} vs {} classes",
            new.num_classes, base.num_classes
        )));
    }
    let zip = |a: &[Option<f64>], b: &[Option<f64>]| {
        a.iter()
            .zip(b)
            .map(|(&n, &b)| relative_change_pct(n, b))
            .collect()
    };
    Ok(RelativeChange {
        per_class_iou: zip(&new.per_class_iou, &base.per_class_iou),
        miou: relative_change_pct(new.miou, base.miou),
        per_class_incorrect_ratio: zip(
            &new.per_class_incorrect_ratio,
            &base.per_class_incorrect_ratio,
        ),
        global_incorrect_ratio: relative_change_pct(
            new.global_incorrect_ratio,
            base.global_incorrect_ratio,
        ),
    })
}
