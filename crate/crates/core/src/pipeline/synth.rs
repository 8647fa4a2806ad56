use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{resolve, PipelineConfig};
use super::tables::{num, write_clinical, write_features, write_rows, FeatureTable};
use crate::error::{Error, Result};
use crate::numeric::{sigmoid_scalar, Rng};
use crate::slide::io::save_png;
use crate::slide::Tile;
use crate::stratify::ClinicalRecord;
use crate::vit::{VitConfig, VitWeights};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub k: usize,
    pub n: usize,
    pub seed: u64,
    /// Distance of group centres in the planted latent space, in units of
    /// the within-group spread. Zero plants no structure at all.
    pub separation: f64,
    pub censoring_rate: f64,
    /// Per-group daily hazards; defaults depend on `k`.
    pub hazards: Option<Vec<f64>>,
    pub feature_dim: usize,
    pub tile_size: usize,
    /// Tiles per side of each synthetic slide.
    pub grid: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            k: 3,
            n: 300,
            seed: 0,
            separation: 4.0,
            censoring_rate: 0.2,
            hazards: None,
            feature_dim: 1024,
            tile_size: 64,
            grid: 2,
        }
    }
}

/// Separation at which hazards reach their full planted spread.
pub const FULL_SEPARATION: f64 = 4.0;

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.n < self.k {
            return Err(Error::InvalidArgument(format!(
                "need 1 <= k <= n, got k = {} and n = {}",
                self.k, self.n
            )));
        }
        if !(0.0..=1.0).contains(&self.censoring_rate) {
            return Err(Error::InvalidArgument("censoring_rate outside [0, 1]".into()));
        }
        if !(self.separation >= 0.0) {
            return Err(Error::InvalidArgument("separation must be non-negative".into()));
        }
        if self.feature_dim == 0 || self.tile_size < 16 || self.grid == 0 {
            return Err(Error::InvalidArgument(
                "feature_dim, grid must be positive and tile_size at least 16".into(),
            ));
        }
        if let Some(h) = &self.hazards {
            if h.len() != self.k || h.iter().any(|&v| !(v > 0.0)) {
                return Err(Error::InvalidArgument(format!(
                    "hazards must list {} positive rates",
                    self.k
                )));
            }
        }
        Ok(())
    }

    /// Planted hazards after shrinking their log-spread by
    /// `min(separation / FULL_SEPARATION, 1)`.
    pub fn effective_hazards(&self) -> Vec<f64> {
        let base = self.hazards.clone().unwrap_or_else(|| match self.k {
            1 => vec![0.005],
            2 => vec![0.001, 0.02],
            3 => vec![0.001, 0.005, 0.02],
            k => (0..k)
                .map(|g| 0.001 * 20f64.powf(g as f64 / (k - 1) as f64))
                .collect(),
        });
        let logs: Vec<f64> = base.iter().map(|h| h.ln()).collect();
        let mean = logs.iter().sum::<f64>() / logs.len() as f64;
        let f = (self.separation / FULL_SEPARATION).min(1.0);
        logs.iter().map(|l| (mean + f * (l - mean)).exp()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    pub ids: Vec<String>,
    pub groups: Vec<usize>,
    pub features: Vec<Vec<f64>>,
    pub clinical: Vec<ClinicalRecord>,
    pub hazards: Vec<f64>,
}

pub fn case_id(i: usize) -> String {
    format!("case_{i:04}")
}

/// Features and survival for a planted cohort, without images.
pub fn generate_cohort(cfg: &SynthConfig) -> Result<Cohort> {
    cfg.validate()?;
    let root = Rng::new(cfg.seed);
    let latent = cfg.k.max(3);
    let mut meta = root.child(0);
    let projection: Vec<Vec<f64>> = (0..cfg.feature_dim)
        .map(|_| (0..latent).map(|_| meta.normal()).collect())
        .collect();
    let hazards = cfg.effective_hazards();
    let inv_sqrt = 1.0 / (latent as f64).sqrt();
    let mut order: Vec<usize> = (0..cfg.n).map(|i| i % cfg.k).collect();
    meta.shuffle(&mut order);
    let mut cohort = Cohort {
        ids: Vec::with_capacity(cfg.n),
        groups: order,
        features: Vec::with_capacity(cfg.n),
        clinical: Vec::with_capacity(cfg.n),
        hazards: hazards.clone(),
    };
    for i in 0..cfg.n {
        let g = cohort.groups[i];
        let mut rng = root.child(1 + i as u64);
        let u: Vec<f64> = (0..latent)
            .map(|l| if l == g { cfg.separation } else { 0.0 } + rng.normal())
            .collect();
        let features = projection
            .iter()
            .map(|a| {
                let s: f64 = a.iter().zip(&u).map(|(a, u)| a * u).sum();
                sigmoid_scalar(s * inv_sqrt + 0.1 * rng.normal())
            })
            .collect();
        let t = rng.exponential(hazards[g]);
        let (time, event) = if rng.uniform() < cfg.censoring_rate {
            (t * rng.uniform(), false)
        } else {
            (t, true)
        };
        let id = case_id(i);
        let mut rec = ClinicalRecord::new(id.clone(), (time * 100.0).round() / 100.0, event);
        rec.label = Some(format!("G{g}"));
        cohort.ids.push(id);
        cohort.features.push(features);
        cohort.clinical.push(rec);
    }
    Ok(cohort)
}

const BACKGROUND: [u8; 3] = [232, 178, 206];
const NUCLEUS: [u8; 3] = [68, 42, 150];
const WHITE: [u8; 3] = [252, 252, 252];

fn jitter(rng: &mut Rng, c: [u8; 3], amount: i32) -> [u8; 3] {
    c.map(|v| (v as i32 + rng.index(2 * amount as usize + 1) as i32 - amount).clamp(0, 255) as u8)
}

/// H&E-like tile: pink stroma, dark blue nuclei, optional white gap.
pub fn synthetic_tile(rng: &mut Rng, size: usize, nuclei: usize) -> Tile {
    let mut tile = Tile::filled(size, size, BACKGROUND);
    for y in 0..size {
        for x in 0..size {
            let c = jitter(rng, BACKGROUND, 6);
            tile.set_rgb(x, y, c);
        }
    }
    if rng.uniform() < 0.35 {
        let w = size / 4 + rng.index(size / 3);
        let h = size / 4 + rng.index(size / 3);
        let (x0, y0) = (rng.index(size - w), rng.index(size - h));
        for y in y0..y0 + h {
            for x in x0..x0 + w {
                tile.set_rgb(x, y, WHITE);
            }
        }
    }
    for _ in 0..nuclei {
        let r = 3 + rng.index(3);
        let cx = r + 1 + rng.index(size - 2 * r - 2);
        let cy = r + 1 + rng.index(size - 2 * r - 2);
        let ri = r as i64;
        for dy in -ri..=ri {
            for dx in -ri..=ri {
                if dx * dx + dy * dy <= ri * ri {
                    let c = jitter(rng, NUCLEUS, 10);
                    tile.set_rgb((cx as i64 + dx) as usize, (cy as i64 + dy) as usize, c);
                }
            }
        }
    }
    tile
}

/// ViT geometry written alongside a synthetic cohort.
pub fn synthetic_vit_config(cfg: &SynthConfig) -> VitConfig {
    VitConfig {
        image_size: cfg.tile_size,
        channels: 3,
        patch_size: 16,
        embed_dim: cfg.feature_dim,
        num_heads: 4,
        num_layers: 1,
        mlp_hidden: 256,
        layer_norm_eps: 1e-6,
    }
}

/// Pipeline config matching a synthetic cohort.
pub fn synthetic_pipeline_config(cfg: &SynthConfig) -> PipelineConfig {
    let mut p = PipelineConfig {
        seed: cfg.seed,
        ..PipelineConfig::default()
    };
    p.paths.extract_output = "vit_features.csv".into();
    p.scoring.min_area = 12;
    p.train.epochs = 20;
    p.train.layer_sizes[0] = cfg.feature_dim;
    p
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSummary {
    pub cases: usize,
    pub events: usize,
    pub hazards: Vec<f64>,
}

/// Writes tiles, planted features, clinical table, truth sidecar, toy ViT
/// weights and a matching `pathx.toml` under `out`.
pub fn synthesize(out: &Path, cfg: &SynthConfig) -> Result<SynthSummary> {
    let cohort = generate_cohort(cfg)?;
    let pipeline = synthetic_pipeline_config(cfg);
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let tiles_dir = resolve(out, &pipeline.paths.tiles);
    let root = Rng::new(Rng::derive_seed(cfg.seed, 1));
    let results: Vec<Result<()>> = {
        use rayon::prelude::*;
        cohort
            .ids
            .par_iter()
            .enumerate()
            .map(|(i, id)| {
                let mut rng = root.child(i as u64);
                let dir = tiles_dir.join(id);
                std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
                let density = 3 + 2 * cohort.groups[i];
                for r in 0..cfg.grid {
                    for c in 0..cfg.grid {
                        let nuclei = density + rng.index(5);
                        let tile = synthetic_tile(&mut rng, cfg.tile_size, nuclei);
                        save_png(&tile, &dir.join(format!("{r}_{c}.png")))?;
                    }
                }
                Ok(())
            })
            .collect()
    };
    results.into_iter().collect::<Result<Vec<()>>>()?;
    let table = FeatureTable::new("f", cohort.ids.clone(), cohort.features.clone());
    write_features(&resolve(out, &pipeline.paths.features), &table)?;
    write_clinical(&resolve(out, &pipeline.paths.clinical), &cohort.clinical)?;
    write_rows(
        &out.join("truth.csv"),
        &["case_id", "group", "hazard"],
        cohort.ids.iter().zip(&cohort.groups).map(|(id, &g)| {
            [id.clone(), g.to_string(), num(cohort.hazards[g])]
        }),
    )?;
    let weights = VitWeights::random(
        synthetic_vit_config(cfg),
        &mut Rng::new(Rng::derive_seed(cfg.seed, 2)),
    )?;
    weights.save(&resolve(out, &pipeline.paths.vit_weights))?;
    let config_path = out.join("pathx.toml");
    std::fs::write(&config_path, pipeline.to_toml()?).map_err(|e| Error::io(&config_path, e))?;
    Ok(SynthSummary {
        cases: cohort.ids.len(),
        events: cohort.clinical.iter().filter(|r| r.event).count(),
        hazards: cohort.hazards,
    })
}
