//! Content-addressed run directories and their provenance records.
//!
//! A run lives in `<out>/<key>/`, where `key` hashes the subcommand, its
//! effective configuration and the contents of every input file. The
//! directory is complete once `provenance.json` exists and every output it
//! lists still has the recorded hash; such a run is reported instead of
//! recomputed.

use std::path::{Path, PathBuf};

use entroseg::provenance::{config_hash, sha256_hex};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::fail::{CliResult, Failure};

pub const PROVENANCE_FILE: &str = "provenance.json";
pub const CONFIG_FILE: &str = "config.json";
const KEY_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub run_key: String,
    pub config: Value,
    pub seeds: Vec<u64>,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
}

pub enum Prepared {
    /// A complete run with this configuration and these inputs already exists.
    Done(PathBuf),
    Fresh(Run),
}

pub struct Run {
    pub dir: PathBuf,
    command: String,
    key: String,
    config: Value,
    seeds: Vec<u64>,
    inputs: Vec<FileHash>,
}

fn read(path: &Path) -> CliResult<Vec<u8>> {
    std::fs::read(path).map_err(|e| Failure::io(path, e))
}

/// Every regular file under `path` (or `path` itself), sorted.
pub fn walk(path: &Path) -> CliResult<Vec<PathBuf>> {
    let meta = std::fs::metadata(path).map_err(|e| Failure::io(path, e))?;
    if meta.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut out = Vec::new();
    let mut entries: Vec<PathBuf> = std::fs::read_dir(path)
        .map_err(|e| Failure::io(path, e))?
        .map(|e| e.map(|e| e.path()).map_err(|e| Failure::io(path, e)))
        .collect::<CliResult<_>>()?;
    entries.sort();
    for p in entries {
        out.extend(walk(&p)?);
    }
    Ok(out)
}

pub fn hash_files(paths: &[PathBuf]) -> CliResult<Vec<FileHash>> {
    let mut files = Vec::new();
    for p in paths {
        for f in walk(p)? {
            files.push(FileHash {
                sha256: sha256_hex(&read(&f)?),
                path: f,
            });
        }
    }
    Ok(files)
}

fn outputs_intact(dir: &Path, outputs: &[FileHash]) -> bool {
    outputs.iter().all(|o| {
        std::fs::read(dir.join(&o.path)).is_ok_and(|bytes| sha256_hex(&bytes) == o.sha256)
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Failure::io(path, e))
}

pub fn create_dir(path: &Path) -> CliResult<()> {
    std::fs::create_dir_all(path).map_err(|e| Failure::io(path, e))
}

impl Run {
    /// Resolves the run directory for `command` under `out`. Inputs are hashed by content only.
    pub fn prepare<C: Serialize>(
        out: &Path,
        command: &str,
        config: &C,
        seeds: Vec<u64>,
        inputs: &[PathBuf],
        force: bool,
    ) -> CliResult<Prepared> {
        let config = serde_json::to_value(config)
            .map_err(|e| Failure::Validation(format!("config: {e}")))?;
        let inputs = hash_files(inputs)?;
        let digests: Vec<&str> = inputs.iter().map(|f| f.sha256.as_str()).collect();
        let key = config_hash(&(command, &config, &digests))[..KEY_LEN].to_string();
        let dir = out.join(&key);
        if !force {
            if let Ok(bytes) = std::fs::read(dir.join(PROVENANCE_FILE)) {
                if let Ok(p) = serde_json::from_slice::<Provenance>(&bytes) {
                    if p.run_key == key && outputs_intact(&dir, &p.outputs) {
                        return Ok(Prepared::Done(dir));
                    }
                }
            }
        }
        create_dir(&dir)?;
        let _ = std::fs::remove_file(dir.join(PROVENANCE_FILE));
        write_json(&dir.join(CONFIG_FILE), &config)?;
        Ok(Prepared::Fresh(Run {
            dir,
            command: command.into(),
            key,
            config,
            seeds,
            inputs,
        }))
    }

    /// Records every file of the run directory and marks the run complete.
    pub fn finish(self) -> CliResult<PathBuf> {
        let mut outputs = Vec::new();
        for f in walk(&self.dir)? {
            let rel = f.strip_prefix(&self.dir).unwrap_or(&f).to_path_buf();
            if rel == Path::new(PROVENANCE_FILE) {
                continue;
            }
            outputs.push(FileHash {
                sha256: sha256_hex(&read(&f)?),
                path: rel,
            });
        }
        let p = Provenance {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: self.command,
            run_key: self.key,
            config: self.config,
            seeds: self.seeds,
            inputs: self.inputs,
            outputs,
        };
        write_json(&self.dir.join(PROVENANCE_FILE), &p)?;
        Ok(self.dir)
    }
}
