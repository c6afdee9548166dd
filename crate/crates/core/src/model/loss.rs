//! Objectives with analytic gradients.
//!
//! Segmentation losses are summed over the labeled pixels of a scene and
//! averaged over scenes. The adversarial loss of a scene is the per-pixel
//! binary cross-entropy of the discriminator, averaged over its pixels.

use rayon::prelude::*;

use super::{forward, Discriminator, PixelClassifier, Prediction};
use crate::error::{Error, Result};
use crate::mapcore::{same_classes, same_shape, ClassMap, FeatureMap, LabelMap, PseudoLabelMap};

/// Probabilities are floored at this value inside logarithms.
pub const LOG_FLOOR: f64 = 1e-12;

/// A loss value with its gradient w.r.t. the classifier scores (`H*W*C`).
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreLoss {
    pub value: f64,
    pub grad_scores: Vec<f64>,
}

/// Pixel-summed cross-entropy over labeled pixels; sentinel pixels contribute nothing.
pub fn loss_seg<L: ClassMap>(pred: &Prediction, labels: &L) -> Result<ScoreLoss> {
    same_shape(
        "segmentation loss",
        (pred.height, pred.width),
        (labels.height(), labels.width()),
    )?;
    same_classes("segmentation loss", pred.num_classes, labels.num_classes())?;
    let c = pred.num_classes;
    let mut value = 0.0;
    let mut grad_scores = vec![0.0; pred.probs.len()];
    for i in 0..pred.num_pixels() {
        let Some(y) = labels.class_at(i) else {
            continue;
        };
        let p = pred.pixel(i);
        value -= p[y].max(LOG_FLOOR).ln();
        let g = &mut grad_scores[i * c..(i + 1) * c];
        g.copy_from_slice(p);
        g[y] -= 1.0;
    }
    Ok(ScoreLoss { value, grad_scores })
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Discriminator cross-entropy of one scene against a domain label.
#[derive(Debug, Clone, PartialEq)]
pub struct AdversarialTerm {
    pub value: f64,
    /// Gradient w.r.t. the classifier scores of the scene.
    pub grad_scores: Vec<f64>,
    /// Gradient w.r.t. the discriminator weights.
    pub grad_disc: Vec<f64>,
}

/// Mean per-pixel `-log D` (`source == true`) or `-log (1 - D)`.
pub fn adversarial_loss(
    disc: &Discriminator,
    pred: &Prediction,
    source: bool,
) -> Result<AdversarialTerm> {
    same_classes("adversarial loss", disc.num_classes(), pred.num_classes)?;
    let c = pred.num_classes;
    let n = pred.num_pixels() as f64;
    let (v, _) = disc.weights().split_at(c);
    let mut value = 0.0;
    let mut grad_scores = vec![0.0; pred.probs.len()];
    let mut grad_disc = vec![0.0; c + 1];
    for i in 0..pred.num_pixels() {
        let p = pred.pixel(i);
        let a = disc.logit(p);
        let (loss, dl_da) = if source {
            (softplus(-a), sigmoid(a) - 1.0)
        } else {
            (softplus(a), sigmoid(a))
        };
        value += loss;
        let scale = dl_da / n;
        for (gd, pk) in grad_disc.iter_mut().zip(p) {
            *gd += scale * pk;
        }
        grad_disc[c] += scale;
        // dL/dp_k = scale * v_k, pulled back through the softmax Jacobian.
        let mean: f64 = p.iter().zip(v).map(|(pk, vk)| pk * vk).sum();
        for ((g, pk), vk) in grad_scores[i * c..(i + 1) * c].iter_mut().zip(p).zip(v) {
            *g = scale * pk * (vk - mean);
        }
    }
    Ok(AdversarialTerm {
        value: value / n,
        grad_scores,
        grad_disc,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorLoss {
    pub value: f64,
    pub source_term: f64,
    pub target_term: f64,
    pub grad: Vec<f64>,
}

/// Domain classification loss: mean over source scenes of `L_adv(x, 1)` plus
/// mean over target scenes of `L_adv(x, 0)`.
pub fn loss_d(
    disc: &Discriminator,
    source: &[Prediction],
    target: &[Prediction],
) -> Result<DiscriminatorLoss> {
    if source.is_empty() || target.is_empty() {
        return Err(Error::InvalidArgument(
            "discriminator loss needs source and target predictions".into(),
        ));
    }
    let terms = |preds: &[Prediction], label: bool| -> Result<(f64, Vec<f64>)> {
        let parts = preds
            .par_iter()
            .map(|p| adversarial_loss(disc, p, label))
            .collect::<Result<Vec<_>>>()?;
        let n = preds.len() as f64;
        let mut grad = vec![0.0; disc.weights().len()];
        let mut value = 0.0;
        for part in &parts {
            value += part.value;
            for (g, d) in grad.iter_mut().zip(&part.grad_disc) {
                *g += d;
            }
        }
        grad.iter_mut().for_each(|g| *g /= n);
        Ok((value / n, grad))
    };
    let (source_term, gs) = terms(source, true)?;
    let (target_term, gt) = terms(target, false)?;
    Ok(DiscriminatorLoss {
        value: source_term + target_term,
        source_term,
        target_term,
        grad: gs.iter().zip(&gt).map(|(a, b)| a + b).collect(),
    })
}

/// Classifier objective value, its parts, and the gradient w.r.t. the
/// classifier weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierLoss {
    pub value: f64,
    /// Mean source segmentation loss.
    pub seg: f64,
    /// Mean target adversarial loss against the "source" label.
    pub adv: f64,
    /// Mean target pseudo-label segmentation loss (0 without pseudo-labels).
    pub pseudo: f64,
    pub grad: Vec<f64>,
}

fn mean_with_grad(parts: Vec<(f64, Vec<f64>)>, len: usize) -> (f64, Vec<f64>) {
    let n = parts.len() as f64;
    let mut grad = vec![0.0; len];
    let mut value = 0.0;
    for (v, g) in &parts {
        value += v;
        for (a, b) in grad.iter_mut().zip(g) {
            *a += b;
        }
    }
    grad.iter_mut().for_each(|g| *g /= n);
    (value / n, grad)
}

/// Evaluates the classifier objective from predictions already computed with `clf`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn classifier_objective(
    clf: &PixelClassifier,
    disc: &Discriminator,
    source: &[(&FeatureMap, &LabelMap)],
    source_preds: &[Prediction],
    target: &[&FeatureMap],
    target_preds: &[Prediction],
    pseudo: Option<&[&PseudoLabelMap]>,
    lambda_adv: f64,
    lambda_sl: f64,
) -> Result<ClassifierLoss> {
    if source.is_empty() || target.is_empty() {
        return Err(Error::InvalidArgument(
            "classifier loss needs non-empty source and target batches".into(),
        ));
    }
    if let Some(p) = pseudo {
        if p.len() != target.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} pseudo-label maps for {} target scenes",
                p.len(),
                target.len()
            )));
        }
    }
    let len = clf.weights().len();
    let backprop = |features: &FeatureMap, grad_scores: &[f64]| {
        let mut g = vec![0.0; len];
        clf.backprop_into(features, grad_scores, &mut g);
        g
    };

    let seg_parts = source
        .par_iter()
        .zip(source_preds)
        .map(|((features, labels), pred)| {
            let l = loss_seg(pred, *labels)?;
            Ok((l.value, backprop(features, &l.grad_scores)))
        })
        .collect::<Result<Vec<_>>>()?;
    let (seg, seg_grad) = mean_with_grad(seg_parts, len);

    let adv_parts = target
        .par_iter()
        .zip(target_preds)
        .map(|(features, pred)| {
            let t = adversarial_loss(disc, pred, true)?;
            Ok((t.value, backprop(features, &t.grad_scores)))
        })
        .collect::<Result<Vec<_>>>()?;
    let (adv, adv_grad) = mean_with_grad(adv_parts, len);

    let mut value = seg + lambda_adv * adv;
    let mut grad: Vec<f64> = seg_grad
        .iter()
        .zip(&adv_grad)
        .map(|(s, a)| s + lambda_adv * a)
        .collect();

    let mut pseudo_value = 0.0;
    if let Some(maps) = pseudo {
        let parts = target
            .par_iter()
            .zip(target_preds)
            .zip(maps)
            .map(|((features, pred), labels)| {
                let l = loss_seg(pred, *labels)?;
                Ok((l.value, backprop(features, &l.grad_scores)))
            })
            .collect::<Result<Vec<_>>>()?;
        let (pv, pg) = mean_with_grad(parts, len);
        pseudo_value = pv;
        value += lambda_sl * pv;
        for (g, p) in grad.iter_mut().zip(&pg) {
            *g += lambda_sl * p;
        }
    }

    Ok(ClassifierLoss {
        value,
        seg,
        adv,
        pseudo: pseudo_value,
        grad,
    })
}

pub(crate) fn predict_all(clf: &PixelClassifier, maps: &[&FeatureMap]) -> Result<Vec<Prediction>> {
    maps.par_iter().map(|f| forward(clf, f)).collect()
}

/// Source segmentation loss plus `lambda_adv` times the target adversarial loss.
pub fn loss_f(
    clf: &PixelClassifier,
    disc: &Discriminator,
    source: &[(&FeatureMap, &LabelMap)],
    target: &[&FeatureMap],
    lambda_adv: f64,
) -> Result<ClassifierLoss> {
    let features: Vec<&FeatureMap> = source.iter().map(|(f, _)| *f).collect();
    let source_preds = predict_all(clf, &features)?;
    let target_preds = predict_all(clf, target)?;
    classifier_objective(
        clf,
        disc,
        source,
        &source_preds,
        target,
        &target_preds,
        None,
        lambda_adv,
        0.0,
    )
}

/// [`loss_f`] plus `lambda_sl` times the mean target pseudo-label loss.
pub fn loss_f_star(
    clf: &PixelClassifier,
    disc: &Discriminator,
    source: &[(&FeatureMap, &LabelMap)],
    target: &[(&FeatureMap, &PseudoLabelMap)],
    lambda_adv: f64,
    lambda_sl: f64,
) -> Result<ClassifierLoss> {
    let source_features: Vec<&FeatureMap> = source.iter().map(|(f, _)| *f).collect();
    let target_features: Vec<&FeatureMap> = target.iter().map(|(f, _)| *f).collect();
    let pseudo: Vec<&PseudoLabelMap> = target.iter().map(|(_, p)| *p).collect();
    let source_preds = predict_all(clf, &source_features)?;
    let target_preds = predict_all(clf, &target_features)?;
    classifier_objective(
        clf,
        disc,
        source,
        &source_preds,
        &target_features,
        &target_preds,
        Some(&pseudo),
        lambda_adv,
        lambda_sl,
    )
}
