use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attribution::{SaliencyMethod, ShapConfig, ShapTarget};
use crate::autoencoder::TrainConfig;
use crate::classify::ClassifyConfig;
use crate::error::{Error, Result};
use crate::numeric::Rng;
use crate::slide::ScoringConfig;
use crate::stratify::{Linkage, TsneConfig};

/// Stage indices used to derive per-stage seeds from the master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Synth = 0,
    Score = 1,
    Extract = 2,
    TrainAe = 3,
    Encode = 4,
    Stratify = 5,
    Classify = 6,
    Explain = 7,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Score => "score",
            Stage::Extract => "extract",
            Stage::TrainAe => "train-ae",
            Stage::Encode => "encode",
            Stage::Stratify => "stratify",
            Stage::Classify => "classify",
            Stage::Explain => "explain",
        }
    }
}

/// Input and output locations, relative to the output directory unless
/// absolute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    pub tiles: PathBuf,
    pub clinical: PathBuf,
    pub vit_weights: PathBuf,
    /// Where `extract` writes ViT features.
    pub extract_output: PathBuf,
    /// Autoencoder input table, read by `train-ae`, `encode` and `explain`.
    pub features: PathBuf,
    pub model: PathBuf,
    pub latent: PathBuf,
    /// Vectors clustered by `stratify`; point at `features` for raw mode.
    pub cluster_input: PathBuf,
    /// Vectors used by `classify`.
    pub classify_input: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            tiles: "tiles".into(),
            clinical: "clinical.csv".into(),
            vit_weights: "vit.vitw".into(),
            extract_output: "features.csv".into(),
            features: "features.csv".into(),
            model: "model.aenc".into(),
            latent: "latent.csv".into(),
            cluster_input: "latent.csv".into(),
            classify_input: "latent.csv".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SlicingConfig {
    /// Edge length of the squares cut from single-image slides.
    pub slice_size: usize,
}

impl Default for SlicingConfig {
    fn default() -> Self {
        Self { slice_size: 1024 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractConfig {
    /// Resample best slices whose size differs from the model input.
    pub resize: bool,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        Self { resize: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StratifyConfig {
    pub ks: Vec<usize>,
    pub linkage: Linkage,
    pub tsne: TsneConfig,
}

impl Default for StratifyConfig {
    fn default() -> Self {
        Self {
            ks: vec![2, 3],
            linkage: Linkage::Ward,
            tsne: TsneConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExplainConfig {
    pub shap: ShapConfig,
    pub target: ShapTarget,
    pub top_k: usize,
    /// Patches reported per feature.
    pub top_patches: usize,
    /// Patches drawn per feature in the overlay.
    pub overlay_boxes: usize,
    pub saliency: SaliencyMethod,
    /// Copies of the all-0.5 reference added next to the feature mean.
    pub neutral_baselines: usize,
    /// Empty selects the longest and shortest uncensored survivors.
    pub cases: Vec<String>,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        Self {
            shap: ShapConfig::default(),
            target: ShapTarget::LatentSum,
            top_k: 10,
            top_patches: 5,
            overlay_boxes: 1,
            saliency: SaliencyMethod::Occlusion,
            neutral_baselines: 10,
            cases: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub paths: Paths,
    pub slicing: SlicingConfig,
    pub scoring: ScoringConfig,
    pub extract: ExtractConfig,
    pub train: TrainConfig,
    pub stratify: StratifyConfig,
    pub classify: ClassifyConfig,
    pub explain: ExplainConfig,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidArgument(format!("config: {e}")))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidArgument(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn stage_seed(&self, stage: Stage) -> u64 {
        Rng::derive_seed(self.seed, stage as u64)
    }

    /// Copy with every module seed derived from the master seed.
    pub fn seeded(&self) -> Self {
        let mut c = self.clone();
        c.train.seed = self.stage_seed(Stage::TrainAe);
        c.stratify.tsne.seed = self.stage_seed(Stage::Stratify);
        c.classify.seed = self.stage_seed(Stage::Classify);
        c.classify.mlp.seed = 0;
        c.explain.shap.seed = self.stage_seed(Stage::Explain);
        c
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.slicing.slice_size == 0 {
            return Err(Error::InvalidArgument("slicing.slice_size must be positive".into()));
        }
        if self.stratify.ks.iter().any(|&k| !(2..=3).contains(&k)) {
            return Err(Error::InvalidArgument(format!(
                "stratify.ks must hold values in 2..=3, got {:?}",
                self.stratify.ks
            )));
        }
        if !(0.0..1.0).contains(&self.classify.test_fraction) {
            return Err(Error::InvalidArgument("classify.test_fraction outside [0, 1)".into()));
        }
        Ok(())
    }
}

pub fn resolve(out: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        out.join(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let c = PipelineConfig {
            seed: 9,
            ..PipelineConfig::default()
        };
        let back = PipelineConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(c, back);
    }

    #[test]
    fn partial_config_fills_defaults() {
        let c = PipelineConfig::from_toml("seed = 3\n[train]\nepochs = 5\n").unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.train.epochs, 5);
        assert_eq!(c.train.batch_size, 32);
        assert_eq!(c.stratify.ks, vec![2, 3]);
    }

    #[test]
    fn stage_seeds_differ() {
        let c = PipelineConfig::default().seeded();
        assert_ne!(c.train.seed, c.classify.seed);
    }
}
