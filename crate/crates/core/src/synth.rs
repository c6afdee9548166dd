//! Deterministic synthetic segmentation domains.
//!
//! A scene is a Voronoi partition of random sites, each site drawn a class
//! from the (possibly skewed) class prior. Pixel features are the class mean
//! plus isotropic Gaussian noise. Within `boundary_blur` pixels of a border
//! between two classes, the mean is a distance-weighted mix of both class
//! means: exactly half-half on the border, the pure class mean at distance
//! `boundary_blur`. Labels always stay the Voronoi class.
//!
//! Randomness is counter based. Each scene has a 64-bit key; its ChaCha8
//! stream `u64::MAX` places and labels the sites, and stream `i` draws the
//! noise of pixel `i` (row-major). Scene keys of a domain pair are
//! `splitmix64(splitmix64(seed ^ salt) ^ index)` with a per-split salt, so
//! every scene is a pure function of `(spec, shift, split, index)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mapcore::{FeatureMap, LabelMap};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub height: usize,
    pub width: usize,
    pub num_classes: usize,
    pub num_regions: usize,
    pub feature_dim: usize,
    pub seed: u64,
    /// One mean vector of length `feature_dim` per class.
    pub class_palette: Vec<Vec<f64>>,
    pub noise_sigma: f64,
    pub boundary_blur: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainShiftSpec {
    /// Additive offset per class mean.
    pub mean_shift: Vec<Vec<f64>>,
    /// Factor applied to `noise_sigma`.
    pub sigma_scale: f64,
    /// Multipliers on the (uniform) class prior of region sites.
    pub class_prior_skew: Vec<f64>,
}

impl DomainShiftSpec {
    /// The shift that leaves the domain unchanged.
    pub fn none(num_classes: usize, feature_dim: usize) -> Self {
        Self {
            mean_shift: vec![vec![0.0; feature_dim]; num_classes],
            sigma_scale: 1.0,
            class_prior_skew: vec![1.0; num_classes],
        }
    }

    pub fn validate(&self, spec: &SceneSpec) -> Result<()> {
        if self.mean_shift.len() != spec.num_classes
            || self.mean_shift.iter().any(|m| m.len() != spec.feature_dim)
        {
            return Err(Error::InvalidArgument(
                "mean_shift must hold one feature_dim vector per class".into(),
            ));
        }
        if self.mean_shift.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("mean_shift must be finite".into()));
        }
        if !(self.sigma_scale > 0.0 && self.sigma_scale.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "sigma_scale must be positive, got {}",
                self.sigma_scale
            )));
        }
        if self.class_prior_skew.len() != spec.num_classes
            || self
                .class_prior_skew
                .iter()
                .any(|&s| !(s > 0.0 && s.is_finite()))
        {
            return Err(Error::InvalidArgument(
                "class_prior_skew needs one positive entry per class".into(),
            ));
        }
        Ok(())
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(Error::InvalidArgument(format!(
                "zero-area scene {}x{}",
                self.height, self.width
            )));
        }
        if self.num_classes < 2 || self.num_classes > crate::mapcore::MAX_CLASSES {
            return Err(Error::InvalidArgument(format!(
                "num_classes {} outside [2, {}]",
                self.num_classes,
                crate::mapcore::MAX_CLASSES
            )));
        }
        if self.num_regions == 0 || self.feature_dim == 0 {
            return Err(Error::InvalidArgument(
                "num_regions and feature_dim must be positive".into(),
            ));
        }
        if self.class_palette.len() != self.num_classes
            || self.class_palette.iter().any(|m| m.len() != self.feature_dim)
        {
            return Err(Error::InvalidArgument(
                "class_palette must hold one feature_dim vector per class".into(),
            ));
        }
        if self.class_palette.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("class means must be finite".into()));
        }
        if !(self.noise_sigma >= 0.0) || !(self.boundary_blur >= 0.0) {
            return Err(Error::InvalidArgument(
                "noise_sigma and boundary_blur must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// A generated scene. `in_band` marks pixels whose features were mixed across a border.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledScene {
    pub seed: u64,
    pub features: FeatureMap,
    pub labels: LabelMap,
    pub in_band: Vec<bool>,
}

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Dataset split a scene belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    Source,
    Target,
    TargetEval,
}

impl Split {
    fn salt(self) -> u64 {
        match self {
            Split::Source => 0x5EED_0000_0000_0001,
            Split::Target => 0x5EED_0000_0000_0002,
            Split::TargetEval => 0x5EED_0000_0000_0003,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Split::Source => "source",
            Split::Target => "target",
            Split::TargetEval => "target-eval",
        }
    }
}

pub fn scene_seed(seed: u64, split: Split, index: usize) -> u64 {
    splitmix64(splitmix64(seed ^ split.salt()) ^ index as u64)
}

const SITE_STREAM: u64 = u64::MAX;

fn dist2(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)
}

fn generate(
    spec: &SceneSpec,
    shift: Option<&DomainShiftSpec>,
    key: u64,
) -> Result<LabeledScene> {
    spec.validate()?;
    if let Some(s) = shift {
        s.validate(spec)?;
    }
    let (h, w, d, c) = (spec.height, spec.width, spec.feature_dim, spec.num_classes);
    let means: Vec<Vec<f64>> = match shift {
        None => spec.class_palette.clone(),
        Some(s) => spec
            .class_palette
            .iter()
            .zip(&s.mean_shift)
            .map(|(m, o)| m.iter().zip(o).map(|(a, b)| a + b).collect())
            .collect(),
    };
    let sigma = spec.noise_sigma * shift.map_or(1.0, |s| s.sigma_scale);
    let prior: Vec<f64> = match shift {
        None => vec![1.0; c],
        Some(s) => s.class_prior_skew.clone(),
    };
    let prior_total: f64 = prior.iter().sum();

    let base = ChaCha8Rng::seed_from_u64(key);
    let mut site_rng = base.clone();
    site_rng.set_stream(SITE_STREAM);
    let sites: Vec<((f64, f64), usize)> = (0..spec.num_regions)
        .map(|_| {
            let x = site_rng.random::<f64>() * w as f64;
            let y = site_rng.random::<f64>() * h as f64;
            let mut u = site_rng.random::<f64>() * prior_total;
            let mut class = c - 1;
            for (k, p) in prior.iter().enumerate() {
                if u < *p {
                    class = k;
                    break;
                }
                u -= p;
            }
            ((x, y), class)
        })
        .collect();

    let mut features = Vec::with_capacity(h * w * d);
    let mut labels = Vec::with_capacity(h * w);
    let mut in_band = Vec::with_capacity(h * w);
    let mut mean = vec![0.0f64; d];
    for row in 0..h {
        for col in 0..w {
            let pixel = row * w + col;
            let pos = (col as f64 + 0.5, row as f64 + 0.5);
            let (own_site, own_class) = sites
                .iter()
                .map(|&(s, k)| (dist2(pos, s), s, k))
                .min_by(|a, b| a.0.total_cmp(&b.0))
                .map(|(_, s, k)| (s, k))
                .expect("at least one site");
            let rival = sites
                .iter()
                .filter(|&&(_, k)| k != own_class)
                .map(|&(s, k)| (dist2(pos, s), s, k))
                .min_by(|a, b| a.0.total_cmp(&b.0));

            mean.copy_from_slice(&means[own_class]);
            let mut banded = false;
            if let (Some((rival_d2, rival_site, rival_class)), true) =
                (rival, spec.boundary_blur > 0.0)
            {
                // Distance to the bisector between the two sites.
                let gap = dist2(own_site, rival_site).sqrt();
                let border = (rival_d2 - dist2(pos, own_site)) / (2.0 * gap);
                if border < spec.boundary_blur {
                    let own_weight = 0.5 + 0.5 * border / spec.boundary_blur;
                    for (j, m) in mean.iter_mut().enumerate() {
                        *m = own_weight * means[own_class][j]
                            + (1.0 - own_weight) * means[rival_class][j];
                    }
                    banded = true;
                }
            }

            if sigma > 0.0 {
                let mut rng = base.clone();
                rng.set_stream(pixel as u64);
                for m in &mean {
                    let z: f64 = rng.sample(StandardNormal);
                    features.push((m + sigma * z) as f32);
                }
            } else {
                features.extend(mean.iter().map(|&m| m as f32));
            }
            labels.push(own_class as u8);
            in_band.push(banded);
        }
    }
    Ok(LabeledScene {
        seed: key,
        features: FeatureMap::new(h, w, d, features)?,
        labels: LabelMap::new(h, w, c, labels)?,
        in_band,
    })
}

/// Generates the scene keyed by `spec.seed`.
pub fn gen_scene(spec: &SceneSpec) -> Result<LabeledScene> {
    generate(spec, None, spec.seed)
}

/// Generates scene `index` of `split`; target splits apply `shift`.
pub fn gen_split_scene(
    spec: &SceneSpec,
    shift: &DomainShiftSpec,
    split: Split,
    index: usize,
) -> Result<LabeledScene> {
    let key = scene_seed(spec.seed, split, index);
    match split {
        Split::Source => generate(spec, None, key),
        Split::Target | Split::TargetEval => generate(spec, Some(shift), key),
    }
}

fn gen_many(
    spec: &SceneSpec,
    shift: &DomainShiftSpec,
    split: Split,
    n: usize,
) -> Result<Vec<LabeledScene>> {
    (0..n)
        .into_par_iter()
        .map(|i| gen_split_scene(spec, shift, split, i))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainPair {
    pub source: Vec<LabeledScene>,
    pub target: Vec<LabeledScene>,
}

pub fn gen_domain_pair(
    spec: &SceneSpec,
    shift: &DomainShiftSpec,
    n_source: usize,
    n_target: usize,
) -> Result<DomainPair> {
    if n_source == 0 || n_target == 0 {
        return Err(Error::InvalidArgument(
            "domain pair needs at least one source and one target scene".into(),
        ));
    }
    spec.validate()?;
    shift.validate(spec)?;
    Ok(DomainPair {
        source: gen_many(spec, shift, Split::Source, n_source)?,
        target: gen_many(spec, shift, Split::Target, n_target)?,
    })
}

/// Labeled source scenes, target training scenes (labels withheld from training)
/// and held-out target evaluation scenes.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub num_classes: usize,
    pub feature_dim: usize,
    pub source: Vec<LabeledScene>,
    pub target: Vec<LabeledScene>,
    pub target_eval: Vec<LabeledScene>,
    /// The generator configuration, when known.
    pub benchmark: Option<Benchmark>,
}

/// A complete generator configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Benchmark {
    pub scene: SceneSpec,
    pub shift: DomainShiftSpec,
    pub n_source: usize,
    pub n_target: usize,
    pub n_eval: usize,
}

impl Benchmark {
    /// Default domain-shift benchmark.
    ///
    /// Six classes in a 7-d feature space. Class `k` has mean `3 e_k` plus a
    /// parity feature in the last dimension, `+2` for even and `-2` for odd
    /// classes in the source domain. The target domain doubles the contrast
    /// (means and noise) and reverses the parity feature to `-1.2` / `+1.2`.
    pub fn default_with_seed(seed: u64) -> Self {
        const C: usize = 6;
        const D: usize = C + 1;
        let parity = |k: usize| if k.is_multiple_of(2) { 1.0 } else { -1.0 };
        let palette = (0..C)
            .map(|k| {
                let mut m = vec![0.0; D];
                m[k] = 3.0;
                m[C] = 2.0 * parity(k);
                m
            })
            .collect();
        let mean_shift = (0..C)
            .map(|k| {
                let mut m = vec![0.0; D];
                m[k] = 3.0;
                m[C] = -3.2 * parity(k);
                m
            })
            .collect();
        Self {
            scene: SceneSpec {
                height: 32,
                width: 32,
                num_classes: C,
                num_regions: 8,
                feature_dim: D,
                seed,
                class_palette: palette,
                noise_sigma: 0.8,
                boundary_blur: 1.0,
            },
            shift: DomainShiftSpec {
                mean_shift,
                sigma_scale: 2.0,
                class_prior_skew: vec![1.0; C],
            },
            n_source: 12,
            n_target: 12,
            n_eval: 8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        self.shift.validate(&self.scene)?;
        if self.n_source == 0 || self.n_target == 0 || self.n_eval == 0 {
            return Err(Error::InvalidArgument(
                "benchmark needs non-empty source, target and eval splits".into(),
            ));
        }
        Ok(())
    }

    pub fn generate(&self) -> Result<Dataset> {
        self.validate()?;
        let pair = gen_domain_pair(&self.scene, &self.shift, self.n_source, self.n_target)?;
        let target_eval = gen_many(&self.scene, &self.shift, Split::TargetEval, self.n_eval)?;
        Ok(Dataset {
            num_classes: self.scene.num_classes,
            feature_dim: self.scene.feature_dim,
            source: pair.source,
            target: pair.target,
            target_eval,
            benchmark: Some(self.clone()),
        })
    }
}
