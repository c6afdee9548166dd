mod common;

use common::*;
use entroseg::mapcore::{ClassMap, FeatureMap, LabelMap, PseudoLabelMap, NULL};
use entroseg::model::*;
use rand::Rng;

const STEP: f64 = 1e-6;
const TOL: f64 = 1e-5;
const INSTANCES: u64 = 24;
const H: usize = 4;
const W: usize = 4;
const D: usize = 3;
const C: usize = 4;

fn numeric_grad(x: &[f64], f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    common::numeric_grad(x, STEP, f)
}

fn assert_close(what: &str, analytic: &[f64], numeric: &[f64]) {
    assert_eq!(analytic.len(), numeric.len());
    for (i, (a, n)) in analytic.iter().zip(numeric).enumerate() {
        let e = rel_err(*a, *n, 1e-3);
        assert!(e <= TOL, "{what}[{i}]: analytic {a} numeric {n} rel {e}");
    }
}

struct Instance {
    clf: PixelClassifier,
    disc: Discriminator,
    source: Vec<(FeatureMap, LabelMap)>,
    target: Vec<FeatureMap>,
    pseudo: Vec<PseudoLabelMap>,
}

fn instance(seed: u64) -> Instance {
    let mut r = rng(seed);
    let clf = PixelClassifier::random(D, C, 0.7, seed);
    let disc = Discriminator::from_weights((0..=C).map(|_| r.random_range(-2.0..2.0)).collect()).unwrap();
    let source = (0..2)
        .map(|_| (random_features(&mut r, H, W, D), random_labels(&mut r, H, W, C, 0.2)))
        .collect();
    let target = (0..2).map(|_| random_features(&mut r, H, W, D)).collect();
    let pseudo = (0..2).map(|_| random_pseudo(&mut r, H, W, C, 0.4)).collect();
    Instance { clf, disc, source, target, pseudo }
}

fn with_weights(clf: &PixelClassifier, w: &[f64]) -> PixelClassifier {
    PixelClassifier::from_weights(clf.feature_dim(), clf.num_classes(), w.to_vec()).unwrap()
}

fn prediction_from_scores(scores: &[f64]) -> Prediction {
    let mut probs = scores.to_vec();
    probs.chunks_exact_mut(C).for_each(softmax_in_place);
    Prediction { height: H, width: W, num_classes: C, probs }
}

#[test]
fn segmentation_loss_gradient() {
    for seed in 0..INSTANCES {
        let inst = instance(seed);
        let (f, l) = &inst.source[0];
        let value = |w: &[f64]| loss_seg(&forward(&with_weights(&inst.clf, w), f).unwrap(), l).unwrap().value;
        let loss = loss_seg(&forward(&inst.clf, f).unwrap(), l).unwrap();
        let mut grad = vec![0.0; inst.clf.weights().len()];
        inst.clf.backprop_into(f, &loss.grad_scores, &mut grad);
        assert_close("seg", &grad, &numeric_grad(inst.clf.weights(), value));
    }
}

#[test]
fn adversarial_loss_gradients() {
    for seed in 0..INSTANCES {
        let inst = instance(seed);
        let mut r = rng(seed + 1000);
        let scores: Vec<f64> = (0..H * W * C).map(|_| r.random_range(-3.0..3.0)).collect();
        let pred = prediction_from_scores(&scores);
        for source in [true, false] {
            let term = adversarial_loss(&inst.disc, &pred, source).unwrap();
            let by_scores = numeric_grad(&scores, |s| {
                adversarial_loss(&inst.disc, &prediction_from_scores(s), source).unwrap().value
            });
            assert_close("adv scores", &term.grad_scores, &by_scores);
            let by_disc = numeric_grad(inst.disc.weights(), |w| {
                let d = Discriminator::from_weights(w.to_vec()).unwrap();
                adversarial_loss(&d, &pred, source).unwrap().value
            });
            assert_close("adv disc", &term.grad_disc, &by_disc);
        }
    }
}

#[test]
fn discriminator_loss_gradient() {
    for seed in 0..INSTANCES {
        let inst = instance(seed);
        let sp: Vec<Prediction> = inst.source.iter().map(|(f, _)| forward(&inst.clf, f).unwrap()).collect();
        let tp: Vec<Prediction> = inst.target.iter().map(|f| forward(&inst.clf, f).unwrap()).collect();
        let loss = loss_d(&inst.disc, &sp, &tp).unwrap();
        assert!((loss.value - (loss.source_term + loss.target_term)).abs() < 1e-12);
        let numeric = numeric_grad(inst.disc.weights(), |w| {
            loss_d(&Discriminator::from_weights(w.to_vec()).unwrap(), &sp, &tp).unwrap().value
        });
        assert_close("loss_d", &loss.grad, &numeric);
    }
}

#[test]
fn classifier_loss_gradients() {
    for seed in 0..INSTANCES {
        let inst = instance(seed);
        let source: Vec<(&FeatureMap, &LabelMap)> = inst.source.iter().map(|(f, l)| (f, l)).collect();
        let target: Vec<&FeatureMap> = inst.target.iter().collect();
        let with_pseudo: Vec<(&FeatureMap, &PseudoLabelMap)> = inst.target.iter().zip(&inst.pseudo).collect();
        for lambda_adv in [1e-3, 0.5, 2.0] {
            let lf = loss_f(&inst.clf, &inst.disc, &source, &target, lambda_adv).unwrap();
            assert!((lf.value - (lf.seg + lambda_adv * lf.adv)).abs() < 1e-12);
            let numeric = numeric_grad(inst.clf.weights(), |w| {
                loss_f(&with_weights(&inst.clf, w), &inst.disc, &source, &target, lambda_adv).unwrap().value
            });
            assert_close("loss_f", &lf.grad, &numeric);

            let lambda_sl = 0.7;
            let ls = loss_f_star(&inst.clf, &inst.disc, &source, &with_pseudo, lambda_adv, lambda_sl).unwrap();
            assert!((ls.value - (lf.value + lambda_sl * ls.pseudo)).abs() < 1e-12);
            let numeric = numeric_grad(inst.clf.weights(), |w| {
                loss_f_star(&with_weights(&inst.clf, w), &inst.disc, &source, &with_pseudo, lambda_adv, lambda_sl)
                    .unwrap()
                    .value
            });
            assert_close("loss_f_star", &ls.grad, &numeric);
        }
    }
}

#[test]
fn null_pixels_are_excluded_exactly() {
    for seed in 0..INSTANCES {
        let inst = instance(seed);
        let f = &inst.target[0];
        let pseudo = &inst.pseudo[0];
        let pred = forward(&inst.clf, f).unwrap();
        let loss = loss_seg(&pred, pseudo).unwrap();
        let mut expected = 0.0;
        for i in 0..pred.num_pixels() {
            let row = &loss.grad_scores[i * C..(i + 1) * C];
            match pseudo.class_at(i) {
                None => assert!(row.iter().all(|&g| g == 0.0)),
                Some(y) => expected -= pred.pixel(i)[y].max(LOG_FLOOR).ln(),
            }
        }
        assert_eq!(loss.value, expected);

        // arbitrary changes at null pixels leave the loss untouched
        let mut moved = pred.clone();
        for i in 0..moved.num_pixels() {
            if pseudo.labels()[i] == NULL {
                let row = &mut moved.probs[i * C..(i + 1) * C];
                row.iter_mut().for_each(|p| *p = 1.0 / C as f64);
            }
        }
        let again = loss_seg(&moved, pseudo).unwrap();
        assert_eq!(again.value, loss.value);
        assert_eq!(again.grad_scores, loss.grad_scores);

        let all_null = PseudoLabelMap::empty(H, W, C).unwrap();
        let zero = loss_seg(&pred, &all_null).unwrap();
        assert_eq!(zero.value, 0.0);
        assert!(zero.grad_scores.iter().all(|&g| g == 0.0));
    }
}

#[test]
fn softmax_is_shift_invariant() {
    let mut r = rng(3);
    for _ in 0..50 {
        let s: Vec<f64> = (0..C).map(|_| r.random_range(-20.0..20.0)).collect();
        let shift = r.random_range(-500.0..500.0);
        let mut a = s.clone();
        let mut b: Vec<f64> = s.iter().map(|v| v + shift).collect();
        softmax_in_place(&mut a);
        softmax_in_place(&mut b);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn optimizers_follow_their_update_rules() {
    let mut sgd = Sgd::new(0.1, 0.9, 0.01);
    let mut theta = vec![1.0, -2.0];
    let g = [0.5, 0.25];
    sgd.step(&mut theta, &g);
    // v = g + wd * theta; theta -= lr * v
    assert!((theta[0] - (1.0 - 0.1 * (0.5 + 0.01))).abs() < 1e-15);
    let v0 = 0.5 + 0.01;
    let t0 = theta[0];
    sgd.step(&mut theta, &g);
    assert!((theta[0] - (t0 - 0.1 * (0.9 * v0 + 0.5 + 0.01 * t0))).abs() < 1e-15);

    // the first bias-corrected Adam step moves each coordinate by about lr
    let mut adam = Adam::new(1e-3);
    let mut w = vec![0.0, 0.0];
    adam.step(&mut w, &[3.0, -0.01]);
    assert!((w[0] + 1e-3).abs() < 1e-9);
    assert!((w[1] - 1e-3).abs() < 1e-6);
}
