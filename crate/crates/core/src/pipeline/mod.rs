//! File-based stages from tiles to risk groups, plus synthetic cohorts.

mod config;
mod manifest;
mod plots;
pub mod stages;
mod synth;
pub mod tables;

pub use config::{
    resolve, ExplainConfig, ExtractConfig, Paths, PipelineConfig, SlicingConfig, Stage,
    StratifyConfig,
};
pub use manifest::{digests, run, sha256_file, FileDigest, Manifest, StageRecord, MANIFEST_FILE};
pub use plots::{km_svg, tsne_svg};
pub use stages::StageOutcome;
pub use synth::{
    case_id, generate_cohort, synthesize, synthetic_pipeline_config, synthetic_tile,
    synthetic_vit_config, Cohort, SynthConfig, SynthSummary,
};
