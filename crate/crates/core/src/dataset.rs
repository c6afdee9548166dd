//! On-disk datasets: a JSON manifest plus one feature map, one label map and
//! one band mask per scene. Paths in the manifest are relative to its directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mapcore::{read_featuremap, read_labelmap, write_featuremap, write_labelmap};
use crate::mapcore::LabelMap;
use crate::synth::{Benchmark, Dataset, LabeledScene};

pub const MANIFEST_FORMAT: &str = "entroseg-dataset";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneFiles {
    pub seed: u64,
    pub features: PathBuf,
    pub labels: PathBuf,
    /// Two-class label map, 1 on blur-band pixels.
    pub in_band: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub num_classes: usize,
    pub feature_dim: usize,
    pub benchmark: Option<Benchmark>,
    pub source: Vec<SceneFiles>,
    pub target: Vec<SceneFiles>,
    pub target_eval: Vec<SceneFiles>,
}

impl Manifest {
    /// Every file the manifest references, relative to its directory.
    pub fn files(&self) -> impl Iterator<Item = &Path> {
        self.source
            .iter()
            .chain(&self.target)
            .chain(&self.target_eval)
            .flat_map(|s| [s.features.as_path(), s.labels.as_path(), s.in_band.as_path()])
    }
}

fn write_split(dir: &Path, name: &str, scenes: &[LabeledScene]) -> Result<Vec<SceneFiles>> {
    let sub = dir.join(name);
    std::fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
    scenes
        .iter()
        .enumerate()
        .map(|(i, scene)| {
            let files = SceneFiles {
                seed: scene.seed,
                features: PathBuf::from(format!("{name}/{i:04}.segf")),
                labels: PathBuf::from(format!("{name}/{i:04}.segl")),
                in_band: PathBuf::from(format!("{name}/{i:04}.band.segl")),
            };
            write_featuremap(&scene.features, dir.join(&files.features))?;
            write_labelmap(&scene.labels, dir.join(&files.labels))?;
            let band = LabelMap::new(
                scene.labels.height(),
                scene.labels.width(),
                2,
                scene.in_band.iter().map(|&b| b as u8).collect(),
            )?;
            write_labelmap(&band, dir.join(&files.in_band))?;
            Ok(files)
        })
        .collect()
}

/// Writes all scenes under `dir` and returns the manifest, also stored as `dir/manifest.json`.
pub fn write_dataset(dir: impl AsRef<Path>, data: &Dataset) -> Result<Manifest> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = Manifest {
        format: MANIFEST_FORMAT.into(),
        version: 1,
        num_classes: data.num_classes,
        feature_dim: data.feature_dim,
        benchmark: data.benchmark.clone(),
        source: write_split(dir, "source", &data.source)?,
        target: write_split(dir, "target", &data.target)?,
        target_eval: write_split(dir, "target_eval", &data.target_eval)?,
    };
    let path = dir.join(MANIFEST_FILE);
    let json = serde_json::to_vec_pretty(&manifest).map_err(|e| Error::json(&path, e))?;
    std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let m: Manifest = serde_json::from_slice(&bytes).map_err(|e| Error::json(path, e))?;
    if m.format != MANIFEST_FORMAT || m.version != 1 {
        return Err(Error::InvalidArgument(format!(
            "{}: not a version 1 dataset manifest",
            path.display()
        )));
    }
    Ok(m)
}

fn read_split(dir: &Path, files: &[SceneFiles], m: &Manifest) -> Result<Vec<LabeledScene>> {
    files
        .iter()
        .map(|f| {
            let features = read_featuremap(dir.join(&f.features))?;
            let labels = read_labelmap(dir.join(&f.labels))?;
            let band = read_labelmap(dir.join(&f.in_band))?;
            if labels.num_classes() != m.num_classes || features.dim() != m.feature_dim {
                return Err(Error::DimensionMismatch(format!(
                    "{}: scene disagrees with manifest class count or feature dim",
                    f.labels.display()
                )));
            }
            if (features.height(), features.width()) != (labels.height(), labels.width())
                || (band.height(), band.width()) != (labels.height(), labels.width())
                || band.num_classes() != 2
            {
                return Err(Error::DimensionMismatch(format!(
                    "{}: scene files disagree in shape",
                    f.labels.display()
                )));
            }
            Ok(LabeledScene {
                seed: f.seed,
                features,
                labels,
                in_band: band.labels().iter().map(|&b| b == 1).collect(),
            })
        })
        .collect()
}

/// Loads the dataset described by the manifest at `path`.
pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let m = read_manifest(path)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    if m.source.is_empty() || m.target.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "{}: manifest needs source and target scenes",
            path.display()
        )));
    }
    Ok(Dataset {
        num_classes: m.num_classes,
        feature_dim: m.feature_dim,
        source: read_split(dir, &m.source, &m)?,
        target: read_split(dir, &m.target, &m)?,
        target_eval: read_split(dir, &m.target_eval, &m)?,
        benchmark: m.benchmark.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let mut b = Benchmark::default_with_seed(3);
        b.scene.height = 8;
        b.scene.width = 9;
        b.n_source = 2;
        b.n_target = 2;
        b.n_eval = 1;
        let data = b.generate().unwrap();
        let dir = tempfile::tempdir().unwrap();
        let m = write_dataset(dir.path(), &data).unwrap();
        assert_eq!(m.files().count(), 15);
        let back = read_dataset(dir.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(back, data);
    }
}
