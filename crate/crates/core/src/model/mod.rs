//! Per-pixel linear softmax segmenter, output-space logistic discriminator,
//! their objectives and the alternating training loop.

mod checkpoint;
mod loss;
mod optim;
mod train;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mapcore::{FeatureMap, ProbMap};

pub use checkpoint::{read_checkpoint, write_checkpoint, CheckpointHeader, CHECKPOINT_FORMAT};
pub use loss::{
    adversarial_loss, loss_d, loss_f, loss_f_star, loss_seg, AdversarialTerm, ClassifierLoss,
    DiscriminatorLoss, ScoreLoss, LOG_FLOOR,
};
pub use optim::{Adam, Sgd};
pub use train::{
    evaluate_miou, train_uda, EpochRecord, TrainConfig, TrainLog, TrainOutcome, TrainingSet,
};

/// Linear softmax classifier over per-pixel features.
///
/// `weights` is a `(D + 1) x C` row-major matrix whose last row is the bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PixelClassifier {
    feature_dim: usize,
    num_classes: usize,
    weights: Vec<f64>,
}

impl PixelClassifier {
    pub fn zeros(feature_dim: usize, num_classes: usize) -> Self {
        Self {
            feature_dim,
            num_classes,
            weights: vec![0.0; (feature_dim + 1) * num_classes],
        }
    }

    /// Gaussian initialization with standard deviation `scale`, seeded.
    pub fn random(feature_dim: usize, num_classes: usize, scale: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = (0..(feature_dim + 1) * num_classes)
            .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Self {
            feature_dim,
            num_classes,
            weights,
        }
    }

    pub fn from_weights(feature_dim: usize, num_classes: usize, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != (feature_dim + 1) * num_classes {
            return Err(Error::DimensionMismatch(format!(
                "classifier with D={feature_dim}, C={num_classes} needs {} weights, got {}",
                (feature_dim + 1) * num_classes,
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Invariant("non-finite classifier weight".into()));
        }
        Ok(Self {
            feature_dim,
            num_classes,
            weights,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    /// Linear scores of one pixel into `out` (length `C`).
    pub fn scores_into(&self, x: &[f32], out: &mut [f64]) {
        let c = self.num_classes;
        let bias = &self.weights[self.feature_dim * c..];
        out.copy_from_slice(bias);
        for (r, &xr) in x.iter().enumerate() {
            let row = &self.weights[r * c..(r + 1) * c];
            let xr = xr as f64;
            for (o, w) in out.iter_mut().zip(row) {
                *o += xr * w;
            }
        }
    }

    /// Accumulates `dL/dW` given `dL/dscores` for every pixel of `features`.
    pub fn backprop_into(&self, features: &FeatureMap, grad_scores: &[f64], grad: &mut [f64]) {
        let c = self.num_classes;
        let d = self.feature_dim;
        for (x, g) in features.pixels().zip(grad_scores.chunks_exact(c)) {
            for (r, &xr) in x.iter().enumerate() {
                let xr = xr as f64;
                for (acc, gi) in grad[r * c..(r + 1) * c].iter_mut().zip(g) {
                    *acc += xr * gi;
                }
            }
            for (acc, gi) in grad[d * c..].iter_mut().zip(g) {
                *acc += gi;
            }
        }
    }
}

/// Per-pixel logistic regression on the softmax vector: `sigmoid(v . p + b)`,
/// output 1 meaning "source".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discriminator {
    num_classes: usize,
    weights: Vec<f64>,
}

impl Discriminator {
    pub fn zeros(num_classes: usize) -> Self {
        Self {
            num_classes,
            weights: vec![0.0; num_classes + 1],
        }
    }

    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        if weights.len() < 3 {
            return Err(Error::DimensionMismatch(
                "discriminator needs C + 1 >= 3 weights".into(),
            ));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Invariant("non-finite discriminator weight".into()));
        }
        Ok(Self {
            num_classes: weights.len() - 1,
            weights,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    /// Pre-sigmoid output for one softmax vector.
    pub fn logit(&self, p: &[f64]) -> f64 {
        let (v, b) = self.weights.split_at(self.num_classes);
        b[0] + v.iter().zip(p).map(|(a, b)| a * b).sum::<f64>()
    }
}

/// Double-precision softmax output of the classifier on one scene.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub height: usize,
    pub width: usize,
    pub num_classes: usize,
    pub probs: Vec<f64>,
}

impl Prediction {
    pub fn num_pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn pixel(&self, i: usize) -> &[f64] {
        &self.probs[i * self.num_classes..(i + 1) * self.num_classes]
    }

    /// Rounds to the `f32` storage map.
    pub fn to_probmap(&self) -> ProbMap {
        ProbMap::new(
            self.height,
            self.width,
            self.num_classes,
            self.probs.iter().map(|&p| p as f32).collect(),
        )
        .expect("prediction shape is consistent")
    }
}

/// Numerically stable softmax of `scores` in place.
pub fn softmax_in_place(scores: &mut [f64]) {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for s in scores.iter_mut() {
        *s = (*s - max).exp();
        sum += *s;
    }
    for s in scores.iter_mut() {
        *s /= sum;
    }
}

/// Softmax predictions of `clf` on every pixel of `features`.
pub fn forward(clf: &PixelClassifier, features: &FeatureMap) -> Result<Prediction> {
    if features.dim() != clf.feature_dim {
        return Err(Error::DimensionMismatch(format!(
            "classifier expects {} features, map has {}",
            clf.feature_dim,
            features.dim()
        )));
    }
    let c = clf.num_classes;
    let mut probs = vec![0.0; features.num_pixels() * c];
    for (x, out) in features.pixels().zip(probs.chunks_exact_mut(c)) {
        clf.scores_into(x, out);
        softmax_in_place(out);
    }
    Ok(Prediction {
        height: features.height(),
        width: features.width(),
        num_classes: c,
        probs,
    })
}
