//! Dense per-pixel maps: softmax probabilities, class-id labels, pseudo-labels,
//! entropies and input features.
//!
//! All maps are row-major. Multi-channel maps store the channel fastest, so the
//! value for pixel `(h, w)` and channel `c` lives at `(h * width + w) * channels + c`.

mod io;

use std::fmt;

use crate::error::{Error, Result};

pub use io::{
    read_entropymap, read_featuremap, read_labelmap, read_probmap, read_pseudolabels,
    write_entropymap, write_featuremap, write_labelmap, write_probmap, write_pseudolabels,
    FORMAT_VERSION,
};

/// Reserved id for unlabeled ground-truth pixels.
pub const VOID: u8 = u8::MAX;
/// Reserved id for pixels that received no pseudo-label.
pub const NULL: u8 = u8::MAX;
/// Largest number of classes representable with 8-bit ids plus the sentinel.
pub const MAX_CLASSES: usize = 255;

/// Tolerance on the per-pixel channel sum of a [`ProbMap`].
pub const PIXEL_SUM_TOLERANCE: f64 = 1e-4;

fn checked_len(dims: &[usize]) -> Result<usize> {
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::DimensionOverflow(format!("{dims:?}")))
}

/// Per-image softmax prediction, `H x W x C`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMap {
    height: usize,
    width: usize,
    num_classes: usize,
    values: Vec<f32>,
}

/// First invariant a [`ProbMap`] fails, as reported by [`ProbMap::validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Shape(String),
    Range { index: usize, value: f32 },
    PixelSum { pixel: usize, sum: f64 },
}

impl Violation {
    /// Short identifier of the violated invariant.
    pub fn kind(&self) -> &'static str {
        match self {
            Violation::Shape(_) => "shape",
            Violation::Range { .. } => "range",
            Violation::PixelSum { .. } => "pixel sum",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Shape(s) => write!(f, "shape: {s}"),
            Violation::Range { index, value } => {
                write!(f, "range: value {value} at index {index} is outside [0, 1]")
            }
            Violation::PixelSum { pixel, sum } => {
                write!(f, "pixel sum: pixel {pixel} sums to {sum}")
            }
        }
    }
}

impl ProbMap {
    /// Wraps a value buffer. Only the shape is checked here; probability
    /// invariants are diagnosed by [`ProbMap::validate`].
    pub fn new(height: usize, width: usize, num_classes: usize, values: Vec<f32>) -> Result<Self> {
        let len = checked_len(&[height, width, num_classes])?;
        if values.len() != len {
            return Err(Error::DimensionMismatch(format!(
                "{height}x{width}x{num_classes} map needs {len} values, got {}",
                values.len()
            )));
        }
        Ok(Self {
            height,
            width,
            num_classes,
            values,
        })
    }

    /// Every pixel equal to `1 / C`.
    pub fn uniform(height: usize, width: usize, num_classes: usize) -> Result<Self> {
        let len = checked_len(&[height, width, num_classes])?;
        Self::new(
            height,
            width,
            num_classes,
            vec![1.0 / num_classes as f32; len],
        )
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn num_pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// Channel vector of pixel `index` (row-major pixel index).
    pub fn pixel(&self, index: usize) -> &[f32] {
        let c = self.num_classes;
        &self.values[index * c..(index + 1) * c]
    }

    pub fn pixels(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.values.chunks_exact(self.num_classes)
    }

    /// Checks shape, value range and per-pixel sums, returning the first
    /// violation found.
    pub fn validate(&self) -> std::result::Result<(), Violation> {
        if self.height == 0 || self.width == 0 {
            return Err(Violation::Shape(format!(
                "empty map {}x{}",
                self.height, self.width
            )));
        }
        if self.num_classes < 2 {
            return Err(Violation::Shape(format!(
                "{} classes, need at least 2",
                self.num_classes
            )));
        }
        for (pixel, probs) in self.pixels().enumerate() {
            let mut sum = 0.0f64;
            for (c, &p) in probs.iter().enumerate() {
                // NaN fails this comparison as well.
                if !(0.0..=1.0).contains(&p) {
                    return Err(Violation::Range {
                        index: pixel * self.num_classes + c,
                        value: p,
                    });
                }
                sum += p as f64;
            }
            if (sum - 1.0).abs() > PIXEL_SUM_TOLERANCE {
                return Err(Violation::PixelSum { pixel, sum });
            }
        }
        Ok(())
    }

    /// Per-pixel class of maximum probability; ties go to the lowest index.
    pub fn argmax_map(&self) -> LabelMap {
        let labels = self.pixels().map(|p| argmax(p) as u8).collect();
        LabelMap {
            height: self.height,
            width: self.width,
            num_classes: self.num_classes,
            labels,
        }
    }

    /// Per-pixel maximum probability.
    pub fn max_score_map(&self) -> Vec<f32> {
        self.pixels().map(|p| p[argmax(p)]).collect()
    }
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(values: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Read access shared by ground-truth and pseudo-label maps.
pub trait ClassMap {
    fn height(&self) -> usize;
    fn width(&self) -> usize;
    fn num_classes(&self) -> usize;
    fn raw(&self) -> &[u8];

    fn num_pixels(&self) -> usize {
        self.height() * self.width()
    }

    /// Class at pixel `index`, `None` for the sentinel.
    fn class_at(&self, index: usize) -> Option<usize> {
        match self.raw()[index] {
            u8::MAX => None,
            c => Some(c as usize),
        }
    }
}

macro_rules! class_id_map {
    ($(#[$doc:meta])* $name:ident, $sentinel:ident) => {
        $(#[$doc])*
        #[derive(Debug, Clone, PartialEq, Eq, Hash)]
        pub struct $name {
            height: usize,
            width: usize,
            num_classes: usize,
            labels: Vec<u8>,
        }

        impl $name {
            /// Wraps a label buffer, rejecting ids `>= num_classes` other than the sentinel.
            pub fn new(
                height: usize,
                width: usize,
                num_classes: usize,
                labels: Vec<u8>,
            ) -> Result<Self> {
                if num_classes > MAX_CLASSES {
                    return Err(Error::InvalidArgument(format!(
                        "{num_classes} classes exceed the 8-bit label limit of {MAX_CLASSES}"
                    )));
                }
                let len = checked_len(&[height, width])?;
                if labels.len() != len {
                    return Err(Error::DimensionMismatch(format!(
                        "{height}x{width} label map needs {len} entries, got {}",
                        labels.len()
                    )));
                }
                if let Some(pixel) = labels
                    .iter()
                    .position(|&l| l != $sentinel && l as usize >= num_classes)
                {
                    return Err(Error::LabelRange {
                        id: labels[pixel],
                        num_classes,
                        pixel,
                    });
                }
                Ok(Self {
                    height,
                    width,
                    num_classes,
                    labels,
                })
            }

            /// Map with every pixel set to the sentinel.
            pub fn empty(height: usize, width: usize, num_classes: usize) -> Result<Self> {
                let len = checked_len(&[height, width])?;
                Self::new(height, width, num_classes, vec![$sentinel; len])
            }

            pub fn height(&self) -> usize {
                self.height
            }

            pub fn width(&self) -> usize {
                self.width
            }

            pub fn num_classes(&self) -> usize {
                self.num_classes
            }

            pub fn labels(&self) -> &[u8] {
                &self.labels
            }

            pub fn into_labels(self) -> Vec<u8> {
                self.labels
            }
        }

        impl ClassMap for $name {
            fn height(&self) -> usize {
                self.height
            }
            fn width(&self) -> usize {
                self.width
            }
            fn num_classes(&self) -> usize {
                self.num_classes
            }
            fn raw(&self) -> &[u8] {
                &self.labels
            }
        }
    };
}

class_id_map!(
    /// Ground-truth (or predicted) class ids with [`VOID`] for unlabeled pixels.
    LabelMap,
    VOID
);

class_id_map!(
    /// Extracted pseudo-labels; [`NULL`] marks pixels excluded from the target loss.
    PseudoLabelMap,
    NULL
);

/// Per-pixel normalized entropy.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyMap {
    height: usize,
    width: usize,
    values: Vec<f32>,
}

/// Upper slack tolerated on stored entropies.
pub const ENTROPY_SLACK: f64 = 1e-9;

impl EntropyMap {
    pub fn new(height: usize, width: usize, values: Vec<f32>) -> Result<Self> {
        let len = checked_len(&[height, width])?;
        if values.len() != len {
            return Err(Error::DimensionMismatch(format!(
                "{height}x{width} entropy map needs {len} values, got {}",
                values.len()
            )));
        }
        if let Some(i) = values
            .iter()
            .position(|&v| !(0.0..=1.0 + ENTROPY_SLACK).contains(&(v as f64)))
        {
            return Err(Error::Invariant(format!(
                "entropy {} at pixel {i} outside [0, 1]",
                values[i]
            )));
        }
        Ok(Self {
            height,
            width,
            values,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }
}

/// Per-pixel input features, `H x W x D`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    height: usize,
    width: usize,
    dim: usize,
    values: Vec<f32>,
}

impl FeatureMap {
    pub fn new(height: usize, width: usize, dim: usize, values: Vec<f32>) -> Result<Self> {
        let len = checked_len(&[height, width, dim])?;
        if values.len() != len {
            return Err(Error::DimensionMismatch(format!(
                "{height}x{width}x{dim} feature map needs {len} values, got {}",
                values.len()
            )));
        }
        Ok(Self {
            height,
            width,
            dim,
            values,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn pixel(&self, index: usize) -> &[f32] {
        &self.values[index * self.dim..(index + 1) * self.dim]
    }

    pub fn pixels(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.values.chunks_exact(self.dim)
    }
}

pub(crate) fn same_shape(
    what: &str,
    a: (usize, usize),
    b: (usize, usize),
) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch(format!(
            "{what}: {}x{} vs {}x{}",
            a.0, a.1, b.0, b.1
        )));
    }
    Ok(())
}

pub(crate) fn same_classes(what: &str, a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch(format!(
            "{what}: {a} vs {b} classes"
        )));
    }
    Ok(())
}
