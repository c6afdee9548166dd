//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use entroseg::confidence::ConfidenceKind;
use entroseg::mapcore::{EntropyMap, FeatureMap, LabelMap, ProbMap, PseudoLabelMap, NULL, VOID};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random valid probability map; each raw entry is zero with probability `zero_p`.
pub fn random_probmap(r: &mut ChaCha8Rng, h: usize, w: usize, c: usize, zero_p: f64) -> ProbMap {
    let mut values = Vec::with_capacity(h * w * c);
    for _ in 0..h * w {
        let mut raw: Vec<f64> = (0..c)
            .map(|_| {
                if r.random::<f64>() < zero_p {
                    0.0
                } else {
                    r.random::<f64>().powi(3)
                }
            })
            .collect();
        if raw.iter().all(|&v| v == 0.0) {
            raw[r.random_range(0..c)] = 1.0;
        }
        let s: f64 = raw.iter().sum();
        values.extend(raw.iter().map(|v| (v / s) as f32));
    }
    ProbMap::new(h, w, c, values).expect("random map is valid")
}

pub fn random_labels(r: &mut ChaCha8Rng, h: usize, w: usize, c: usize, void_p: f64) -> LabelMap {
    let labels = (0..h * w)
        .map(|_| {
            if r.random::<f64>() < void_p {
                VOID
            } else {
                r.random_range(0..c) as u8
            }
        })
        .collect();
    LabelMap::new(h, w, c, labels).unwrap()
}

pub fn random_pseudo(r: &mut ChaCha8Rng, h: usize, w: usize, c: usize, null_p: f64) -> PseudoLabelMap {
    let labels = (0..h * w)
        .map(|_| {
            if r.random::<f64>() < null_p {
                NULL
            } else {
                r.random_range(0..c) as u8
            }
        })
        .collect();
    PseudoLabelMap::new(h, w, c, labels).unwrap()
}

pub fn random_features(r: &mut ChaCha8Rng, h: usize, w: usize, d: usize) -> FeatureMap {
    let values = (0..h * w * d)
        .map(|_| r.sample::<f64, _>(StandardNormal) as f32)
        .collect();
    FeatureMap::new(h, w, d, values).unwrap()
}

/// First index holding the maximum, by linear scan.
pub fn oracle_argmax(p: &[f32]) -> usize {
    let mut best = 0;
    for i in 1..p.len() {
        if p[i] > p[best] {
            best = i;
        }
    }
    best
}

/// Neumaier-compensated sum.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Normalized entropy with compensated summation, in the given log base.
pub fn oracle_entropy_base(p: &[f64], base: f64) -> f64 {
    let log = |x: f64| x.ln() / base.ln();
    let total = compensated_sum(p.iter().copied());
    let h = compensated_sum(
        p.iter()
            .filter(|&&v| v > 0.0)
            .map(|&v| -(v / total) * log(v / total)),
    );
    h / log(p.len() as f64)
}

pub fn oracle_entropy(p: &[f64]) -> f64 {
    oracle_entropy_base(p, std::f64::consts::E)
}

/// Lower median in confidence order, via a full sort.
pub fn oracle_median(samples: &[f64], kind: ConfidenceKind) -> Option<f64> {
    if samples.is_empty() {
        return None;
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    let index = match kind {
        // the larger half are the confident scores
        ConfidenceKind::Softmax => (n + 1) / 2 - 1,
        // the smaller half are the confident entropies
        ConfidenceKind::Entropy => n / 2,
    };
    Some(sorted[index])
}

/// Per-class samples gathered by a flat rescan of every pixel.
pub fn oracle_samples(
    maps: &[ProbMap],
    entropies: &[EntropyMap],
    kind: ConfidenceKind,
) -> Vec<Vec<f64>> {
    let c = maps[0].num_classes();
    let mut samples = vec![Vec::new(); c];
    for (m, map) in maps.iter().enumerate() {
        for i in 0..map.num_pixels() {
            let p = &map.values()[i * c..(i + 1) * c];
            let a = oracle_argmax(p);
            let value = match kind {
                ConfidenceKind::Softmax => p[a] as f64,
                ConfidenceKind::Entropy => entropies[m].values()[i] as f64,
            };
            samples[a].push(value);
        }
    }
    samples
}

/// Thresholds built literally from the median and the clamp rule; `None` is median mode.
pub fn oracle_thresholds(samples: &[Vec<f64>], kind: ConfidenceKind, hyper: Option<f64>) -> Vec<f64> {
    samples
        .iter()
        .map(|s| match (oracle_median(s, kind), hyper) {
            (None, Some(h)) => h,
            (None, None) => 0.0,
            (Some(m), None) => m,
            (Some(m), Some(h)) => match kind {
                ConfidenceKind::Softmax => {
                    if m < h {
                        m
                    } else {
                        h
                    }
                }
                ConfidenceKind::Entropy => {
                    if m > h {
                        m
                    } else {
                        h
                    }
                }
            },
        })
        .collect()
}

/// Label class c when c is the argmax and its score exceeds mu_c.
pub fn oracle_ssl(prob: &ProbMap, mu: &[f64]) -> Vec<u8> {
    let c = prob.num_classes();
    let mut out = vec![NULL; prob.num_pixels()];
    for i in 0..prob.num_pixels() {
        let p = &prob.values()[i * c..(i + 1) * c];
        let a = oracle_argmax(p);
        if (p[a] as f64) > mu[a] {
            out[i] = a as u8;
        }
    }
    out
}

/// Label class c when c is the argmax and the entropy is below nu_c.
pub fn oracle_esl(prob: &ProbMap, ent: &EntropyMap, nu: &[f64]) -> Vec<u8> {
    let c = prob.num_classes();
    let mut out = vec![NULL; prob.num_pixels()];
    for i in 0..prob.num_pixels() {
        let a = oracle_argmax(&prob.values()[i * c..(i + 1) * c]);
        if (ent.values()[i] as f64) < nu[a] {
            out[i] = a as u8;
        }
    }
    out
}

/// Relative error with an absolute floor for near-zero quantities.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Central difference of `f` along every coordinate of `x`.
pub fn numeric_grad(x: &[f64], step: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + step;
            let hi = f(&probe);
            probe[i] = x[i] - step;
            let lo = f(&probe);
            probe[i] = x[i];
            (hi - lo) / (2.0 * step)
        })
        .collect()
}

/// Largest relative error between two gradients.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| rel_err(*a, *n, 1e-3))
        .fold(0.0, f64::max)
}
