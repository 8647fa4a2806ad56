use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{PipelineConfig, Stage};
use super::stages::{self, StageOutcome};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    /// Relative to the output directory when inside it.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub seed: u64,
    pub seconds: f64,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub config: PipelineConfig,
    pub stages: Vec<StageRecord>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

fn expand(path: &Path, files: &mut Vec<PathBuf>) -> Result<()> {
    if path.is_dir() {
        let mut entries: Vec<PathBuf> = std::fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .map(|e| e.map(|e| e.path()).map_err(|e| Error::io(path, e)))
            .collect::<Result<_>>()?;
        entries.sort();
        for e in entries {
            expand(&e, files)?;
        }
    } else {
        files.push(path.to_path_buf());
    }
    Ok(())
}

/// Digests of every file under `paths`, directories expanded in sorted order.
pub fn digests(out: &Path, paths: &[PathBuf]) -> Result<Vec<FileDigest>> {
    let mut files = Vec::new();
    for p in paths {
        expand(p, &mut files)?;
    }
    files
        .iter()
        .map(|f| {
            let rel = f.strip_prefix(out).unwrap_or(f);
            Ok(FileDigest {
                path: rel.to_string_lossy().replace('\\', "/"),
                sha256: sha256_file(f)?,
            })
        })
        .collect()
}

fn record(
    out: &Path,
    name: String,
    seed: u64,
    f: impl FnOnce() -> Result<StageOutcome>,
) -> Result<StageRecord> {
    let start = Instant::now();
    let outcome = f()?;
    let seconds = start.elapsed().as_secs_f64();
    Ok(StageRecord {
        stage: name,
        seed,
        seconds,
        inputs: digests(out, &outcome.inputs)?,
        outputs: digests(out, &outcome.outputs)?,
        warnings: outcome.warnings,
    })
}

/// Runs every stage from scoring to explanation and writes the manifest.
pub fn run(config: &PipelineConfig, out: &Path) -> Result<Manifest> {
    config.validate()?;
    let cfg = config.seeded();
    let mut stages_done = Vec::new();
    let seed = |s: Stage| cfg.stage_seed(s);
    stages_done.push(record(out, "score".into(), seed(Stage::Score), || stages::score(&cfg, out))?);
    stages_done.push(record(out, "extract".into(), seed(Stage::Extract), || {
        stages::extract(&cfg, out)
    })?);
    stages_done.push(record(out, "train-ae".into(), seed(Stage::TrainAe), || {
        stages::train_ae(&cfg, out)
    })?);
    stages_done.push(record(out, "encode".into(), seed(Stage::Encode), || stages::encode(&cfg, out))?);
    for &k in &cfg.stratify.ks {
        stages_done.push(record(out, format!("stratify-k{k}"), seed(Stage::Stratify), || {
            stages::stratify(&cfg, out, k)
        })?);
    }
    stages_done.push(record(out, "classify".into(), seed(Stage::Classify), || {
        stages::classify(&cfg, out)
    })?);
    stages_done.push(record(out, "explain".into(), seed(Stage::Explain), || {
        stages::explain(&cfg, out, None)
    })?);
    let manifest = Manifest {
        tool: "pathx".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: cfg.seed,
        config: cfg,
        stages: stages_done,
    };
    let path = out.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Format(format!("manifest: {e}")))?;
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

impl Manifest {
    /// Stage names with their digests, timing left out.
    pub fn checksums(&self) -> Vec<(String, Vec<FileDigest>, Vec<FileDigest>)> {
        self.stages
            .iter()
            .map(|s| (s.stage.clone(), s.inputs.clone(), s.outputs.clone()))
            .collect()
    }
}
