//! Directories of map files, matched by file name.

use std::path::{Path, PathBuf};

use entroseg::confidence::entropy_map;
use entroseg::mapcore::{
    read_entropymap, read_labelmap, read_probmap, read_pseudolabels, EntropyMap, LabelMap, ProbMap,
    PseudoLabelMap,
};

use crate::fail::{CliResult, Failure};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapKind {
    Prob,
    Label,
    Entropy,
    Feature,
}

impl MapKind {
    pub fn extension(self) -> &'static str {
        match self {
            MapKind::Prob => "segp",
            MapKind::Label => "segl",
            MapKind::Entropy => "sege",
            MapKind::Feature => "segf",
        }
    }
}

/// Kind of a map file, from its magic bytes.
pub fn sniff(path: &Path) -> CliResult<MapKind> {
    use std::io::Read;
    let mut magic = [0u8; 4];
    std::fs::File::open(path)
        .and_then(|mut f| f.read_exact(&mut magic))
        .map_err(|e| Failure::io(path, e))?;
    match &magic {
        b"SEGP" => Ok(MapKind::Prob),
        b"SEGL" => Ok(MapKind::Label),
        b"SEGE" => Ok(MapKind::Entropy),
        b"SEGF" => Ok(MapKind::Feature),
        _ => Err(Failure::Validation(format!("{}: not a map file", path.display()))),
    }
}

/// Files in `dir` with one of the extensions `exts`, sorted by name. A plain
/// file is its own listing.
pub fn list(dir: &Path, exts: &[&str]) -> CliResult<Vec<PathBuf>> {
    if dir.is_file() {
        return Ok(vec![dir.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Failure::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .is_some_and(|x| exts.iter().any(|e| x == *e))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Failure::Validation(format!(
            "{}: no .{} files",
            dir.display(),
            exts.join("/.")
        )));
    }
    Ok(files)
}

pub fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Pairs the files of `a` with equally named files in `b_dir`.
pub fn pair_with(a: &[PathBuf], b_dir: &Path, ext: &str) -> CliResult<Vec<(PathBuf, PathBuf)>> {
    a.iter()
        .map(|p| {
            let other = if b_dir.is_file() {
                b_dir.to_path_buf()
            } else {
                b_dir.join(format!("{}.{ext}", stem(p)))
            };
            if !other.is_file() {
                return Err(Failure::Validation(format!(
                    "{}: no counterpart {}",
                    p.display(),
                    other.display()
                )));
            }
            Ok((p.clone(), other))
        })
        .collect()
}

pub fn probs(paths: &[PathBuf]) -> CliResult<Vec<ProbMap>> {
    paths.iter().map(|p| Ok(read_probmap(p)?)).collect()
}

pub fn pseudo(path: &Path) -> CliResult<PseudoLabelMap> {
    Ok(read_pseudolabels(path)?)
}

pub fn labels(path: &Path) -> CliResult<LabelMap> {
    Ok(read_labelmap(path)?)
}

/// A prediction as pseudo-labels: SEGL files directly, SEGP files by argmax.
pub fn prediction(path: &Path) -> CliResult<PseudoLabelMap> {
    match sniff(path)? {
        MapKind::Label => pseudo(path),
        MapKind::Prob => {
            let p = read_probmap(path)?;
            let argmax = p.argmax_map();
            Ok(PseudoLabelMap::new(
                argmax.height(),
                argmax.width(),
                argmax.num_classes(),
                argmax.labels().to_vec(),
            )?)
        }
        other => Err(Failure::Validation(format!(
            "{}: expected a label or probability map, found .{}",
            path.display(),
            other.extension()
        ))),
    }
}

/// Entropies stored in a SEGE file or computed from a SEGP file.
pub fn entropies(path: &Path) -> CliResult<EntropyMap> {
    match sniff(path)? {
        MapKind::Entropy => Ok(read_entropymap(path)?),
        MapKind::Prob => Ok(entropy_map(&read_probmap(path)?)?),
        other => Err(Failure::Validation(format!(
            "{}: expected an entropy or probability map, found .{}",
            path.display(),
            other.extension()
        ))),
    }
}
