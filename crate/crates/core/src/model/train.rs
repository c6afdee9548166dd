use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::loss::{classifier_objective, loss_d, predict_all};
use super::optim::{Adam, Sgd};
use super::{forward, Discriminator, PixelClassifier};
use crate::error::{Error, Result};
use crate::mapcore::{FeatureMap, LabelMap, PseudoLabelMap};
use crate::metrics::{iou, ConfusionMatrix, IouReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr_f: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub lr_d: f64,
    pub lambda_adv: f64,
    pub lambda_sl: f64,
    pub epochs: usize,
    /// Scenes per step, for both domains.
    pub batch: usize,
    pub seed: u64,
    /// Standard deviation of the Gaussian classifier initialization.
    pub init_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr_f: 2.5e-4,
            momentum: 0.9,
            weight_decay: 1e-4,
            lr_d: 1e-4,
            lambda_adv: 1e-3,
            lambda_sl: 1.0,
            epochs: 200,
            batch: 4,
            seed: 0,
            init_scale: 0.01,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lr_f", self.lr_f),
            ("lr_d", self.lr_d),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be > 0, got {v}")));
            }
        }
        let non_negative = [
            ("momentum", self.momentum),
            ("weight_decay", self.weight_decay),
            ("lambda_adv", self.lambda_adv),
            ("lambda_sl", self.lambda_sl),
            ("init_scale", self.init_scale),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be >= 0, got {v}")));
            }
        }
        if self.batch == 0 {
            return Err(Error::InvalidArgument("batch must be >= 1".into()));
        }
        Ok(())
    }
}

/// Everything the training path may see. Target ground truth is deliberately absent.
#[derive(Debug, Clone)]
pub struct TrainingSet<'a> {
    pub source: Vec<(&'a FeatureMap, &'a LabelMap)>,
    pub target: Vec<&'a FeatureMap>,
    /// Pseudo-labels aligned with `target`, when self-training.
    pub pseudo: Option<Vec<&'a PseudoLabelMap>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub seg_loss: f64,
    pub adv_loss: f64,
    pub pseudo_loss: f64,
    pub disc_loss: f64,
    pub target_miou: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub classifier: PixelClassifier,
    pub discriminator: Discriminator,
    pub log: TrainLog,
}

const SHUFFLE_SALT: u64 = 0x7A11_5EED_0000_0000;

/// Target mIoU of `clf` on labeled evaluation scenes.
pub fn evaluate_miou(
    clf: &PixelClassifier,
    eval: &[(&FeatureMap, &LabelMap)],
) -> Result<IouReport> {
    let parts = eval
        .par_iter()
        .map(|(f, gt)| {
            let pred = forward(clf, f)?.to_probmap().argmax_map();
            crate::metrics::confusion(&pred, gt)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut cm = ConfusionMatrix::new(clf.num_classes());
    for part in &parts {
        cm.merge(part)?;
    }
    Ok(iou(&cm))
}

fn check_finite(epoch: usize, what: &str, v: f64) -> Result<()> {
    if !v.is_finite() {
        return Err(Error::Divergence {
            epoch,
            detail: format!("{what} became {v}"),
        });
    }
    Ok(())
}

/// Alternating adversarial training: per step one discriminator update on
/// the current predictions, then one classifier update against the updated
/// discriminator. Pseudo-labels, when present, add the self-training term.
pub fn train_uda(
    set: &TrainingSet<'_>,
    eval: Option<&[(&FeatureMap, &LabelMap)]>,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    let (ns, nt) = (set.source.len(), set.target.len());
    if ns == 0 || nt == 0 {
        return Err(Error::InvalidArgument(
            "training needs source and target scenes".into(),
        ));
    }
    if let Some(p) = &set.pseudo {
        if p.len() != nt {
            return Err(Error::DimensionMismatch(format!(
                "{} pseudo-label maps for {nt} target scenes",
                p.len()
            )));
        }
    }
    let feature_dim = set.source[0].0.dim();
    let num_classes = set.source[0].1.num_classes();
    let mut clf =
        PixelClassifier::random(feature_dim, num_classes, config.init_scale, config.seed);
    let mut disc = Discriminator::zeros(num_classes);
    let mut sgd = Sgd::new(config.lr_f, config.momentum, config.weight_decay);
    let mut adam = Adam::new(config.lr_d);
    let mut log = TrainLog::default();

    let batch = config.batch.min(ns);
    let steps = ns.div_ceil(batch);
    let mut source_order: Vec<usize> = (0..ns).collect();
    let mut target_order: Vec<usize> = (0..nt).collect();

    for epoch in 0..config.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ SHUFFLE_SALT);
        rng.set_stream(epoch as u64);
        source_order.shuffle(&mut rng);
        target_order.shuffle(&mut rng);

        let (mut seg, mut adv, mut pseudo, mut dl) = (0.0, 0.0, 0.0, 0.0);
        for step in 0..steps {
            let s_idx = &source_order[step * batch..((step + 1) * batch).min(ns)];
            let t_idx: Vec<usize> = (0..s_idx.len())
                .map(|j| target_order[(step * batch + j) % nt])
                .collect();
            let source: Vec<(&FeatureMap, &LabelMap)> =
                s_idx.iter().map(|&i| set.source[i]).collect();
            let source_features: Vec<&FeatureMap> = source.iter().map(|(f, _)| *f).collect();
            let target: Vec<&FeatureMap> = t_idx.iter().map(|&i| set.target[i]).collect();
            let pseudo_maps: Option<Vec<&PseudoLabelMap>> = set
                .pseudo
                .as_ref()
                .map(|p| t_idx.iter().map(|&i| p[i]).collect());

            let source_preds = predict_all(&clf, &source_features)?;
            let target_preds = predict_all(&clf, &target)?;

            let d_loss = loss_d(&disc, &source_preds, &target_preds)?;
            check_finite(epoch, "discriminator loss", d_loss.value)?;
            adam.step(disc.weights_mut(), &d_loss.grad);

            let f_loss = classifier_objective(
                &clf,
                &disc,
                &source,
                &source_preds,
                &target,
                &target_preds,
                pseudo_maps.as_deref(),
                config.lambda_adv,
                config.lambda_sl,
            )?;
            check_finite(epoch, "classifier loss", f_loss.value)?;
            sgd.step(clf.weights_mut(), &f_loss.grad);
            if clf.weights().iter().any(|w| !w.is_finite()) {
                return Err(Error::Divergence {
                    epoch,
                    detail: "classifier weights became non-finite".into(),
                });
            }

            seg += f_loss.seg;
            adv += f_loss.adv;
            pseudo += f_loss.pseudo;
            dl += d_loss.value;
        }
        let n = steps as f64;
        let target_miou = match eval {
            Some(e) if !e.is_empty() => evaluate_miou(&clf, e)?.miou,
            _ => None,
        };
        log.epochs.push(EpochRecord {
            epoch,
            seg_loss: seg / n,
            adv_loss: adv / n,
            pseudo_loss: pseudo / n,
            disc_loss: dl / n,
            target_miou,
        });
    }

    Ok(TrainOutcome {
        classifier: clf,
        discriminator: disc,
        log,
    })
}
