use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use super::config::{resolve, PipelineConfig};
use super::plots::{km_svg, tsne_svg};
use super::tables::{
    num, orphaned_ids, read_clinical, read_features, write_features, write_rows, FeatureTable,
};
use crate::attribution::{
    build_overlay, completeness_gap, default_baselines, gradient_shap, localize_features,
    render_svg, top_k_features, EncoderReadout,
};
use crate::autoencoder::Autoencoder;
use crate::classify::{evaluate, LabeledDataset};
use crate::error::{Error, Result};
use crate::slide::io::{discover_slides, grid_tiles, load_tile, read_rgb, save_png, SlideLayout};
use crate::slide::{best_index, score_tile, Tile, TileScore};
use crate::stratify::{
    assign_risk_labels, cluster_curves, cut_tree, hier_cluster_with, pairwise_logrank,
    risk_names, tsne_embed, ClinicalRecord, ClusterAssignment,
};
use crate::vit::{encode_image, VitWeights};

/// Files a stage read and wrote, plus non-fatal problems.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StageOutcome {
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

fn mkdir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

fn write_text(p: &Path, text: &str) -> Result<()> {
    if let Some(parent) = p.parent() {
        mkdir(parent)?;
    }
    std::fs::write(p, text).map_err(|e| Error::io(p, e))
}

fn write_json<T: Serialize>(p: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Format(format!("{}: {e}", p.display())))?;
    text.push('\n');
    write_text(p, &text)
}

pub fn score_dir(out: &Path) -> PathBuf {
    out.join("score")
}

pub fn best_slice_png(out: &Path, slide_id: &str) -> PathBuf {
    score_dir(out).join(slide_id).join("best_slice.png")
}

#[derive(Serialize)]
struct BestSlice<'a> {
    slide_id: &'a str,
    row: usize,
    col: usize,
    origin_x: usize,
    origin_y: usize,
    #[serde(flatten)]
    score: &'a TileScore,
}

/// Scores every tile of every slide and keeps the best one per slide.
/// Unreadable files are reported and skipped; the stage fails only when
/// nothing could be scored.
pub fn score(cfg: &PipelineConfig, out: &Path) -> Result<StageOutcome> {
    let tiles_dir = resolve(out, &cfg.paths.tiles);
    let slides = discover_slides(&tiles_dir)?;
    let mut outcome = StageOutcome {
        inputs: vec![tiles_dir.clone()],
        ..Default::default()
    };
    let dir = score_dir(out);
    mkdir(&dir)?;
    let mut score_rows = Vec::new();
    let mut best_rows = Vec::new();
    let mut errors = Vec::new();
    for slide in &slides {
        let mut tiles: Vec<Tile> = Vec::new();
        match &slide.layout {
            SlideLayout::Tiles(refs) => {
                let loaded: Vec<Result<Tile>> = refs
                    .par_iter()
                    .map(|t| load_tile(&t.path, &slide.slide_id, t.row, t.col))
                    .collect();
                for (r, t) in loaded.into_iter().zip(refs) {
                    match r {
                        Ok(tile) => tiles.push(tile),
                        Err(e) => errors.push((t.path.clone(), e.to_string())),
                    }
                }
            }
            SlideLayout::Single(path) => match read_rgb(path)
                .and_then(|img| grid_tiles(&img, &slide.slide_id, cfg.slicing.slice_size))
            {
                Ok(t) => tiles = t,
                Err(e) => errors.push((path.clone(), e.to_string())),
            },
        }
        if tiles.is_empty() {
            outcome
                .warnings
                .push(format!("slide `{}` has no readable tiles", slide.slide_id));
            continue;
        }
        let scores: Vec<TileScore> = tiles
            .par_iter()
            .map(|t| score_tile(t, &cfg.scoring))
            .collect();
        let bi = best_index(&tiles, &scores)?;
        let (best, best_score) = (&tiles[bi], scores[bi]);
        let mut order: Vec<usize> = (0..tiles.len()).collect();
        order.sort_by_key(|&i| (tiles[i].row, tiles[i].col));
        for i in order {
            let (t, s) = (&tiles[i], &scores[i]);
            score_rows.push([
                slide.slide_id.clone(),
                t.row.to_string(),
                t.col.to_string(),
                s.num_nuclei.to_string(),
                num(s.clarity),
                num(s.blank_fraction),
                num(s.score),
            ]);
        }
        let sdir = dir.join(&slide.slide_id);
        mkdir(&sdir)?;
        let record = BestSlice {
            slide_id: &slide.slide_id,
            row: best.row,
            col: best.col,
            origin_x: best.origin.0,
            origin_y: best.origin.1,
            score: &best_score,
        };
        write_json(&sdir.join("best_slice.json"), &record)?;
        save_png(best, &sdir.join("best_slice.png"))?;
        outcome.outputs.push(sdir.join("best_slice.json"));
        outcome.outputs.push(sdir.join("best_slice.png"));
        best_rows.push([
            slide.slide_id.clone(),
            best.row.to_string(),
            best.col.to_string(),
            num(best_score.score),
        ]);
    }
    let scores_csv = dir.join("tile_scores.csv");
    write_rows(
        &scores_csv,
        &["slide_id", "row", "col", "num_nuclei", "clarity", "blank_fraction", "score"],
        score_rows,
    )?;
    let best_csv = dir.join("best_slices.csv");
    write_rows(&best_csv, &["slide_id", "row", "col", "score"], best_rows.clone())?;
    outcome.outputs.push(scores_csv);
    outcome.outputs.push(best_csv);
    if !errors.is_empty() {
        let err_csv = dir.join("errors.csv");
        for (p, m) in &errors {
            outcome.warnings.push(format!("{}: {m}", p.display()));
        }
        write_rows(
            &err_csv,
            &["path", "message"],
            errors.iter().map(|(p, m)| [p.display().to_string(), m.clone()]),
        )?;
        outcome.outputs.push(err_csv);
    }
    if best_rows.is_empty() {
        return match errors.into_iter().next() {
            Some((path, message)) => Err(Error::Image { path, message }),
            None => Err(Error::NoTiles),
        };
    }
    Ok(outcome)
}

fn best_slice_ids(out: &Path) -> Result<Vec<String>> {
    let path = score_dir(out).join("best_slices.csv");
    let file = std::fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
    let mut r = csv::Reader::from_reader(file);
    let mut ids = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        ids.push(rec.get(0).unwrap_or_default().to_string());
    }
    Ok(ids)
}

/// Loads a case's best slice, resampled to `size` when `resize` is set.
pub fn load_best_slice(out: &Path, case_id: &str, size: usize, resize: bool) -> Result<Tile> {
    let path = best_slice_png(out, case_id);
    let img = read_rgb(&path)?;
    let img = if (img.width() as usize, img.height() as usize) != (size, size) && resize {
        image::imageops::resize(&img, size as u32, size as u32, image::imageops::FilterType::Triangle)
    } else {
        img
    };
    let (w, h) = (img.width() as usize, img.height() as usize);
    Tile::at_grid(case_id, 0, 0, w, h, img.into_raw())
}

/// One ViT feature vector per best slice, in slide order.
pub fn extract(cfg: &PipelineConfig, out: &Path) -> Result<StageOutcome> {
    let weights_path = resolve(out, &cfg.paths.vit_weights);
    let weights = VitWeights::load(&weights_path)?;
    let ids = best_slice_ids(out)?;
    let size = weights.config.image_size;
    let rows = ids
        .par_iter()
        .map(|id| {
            let tile = load_best_slice(out, id, size, cfg.extract.resize)?;
            encode_image(&tile, &weights)
        })
        .collect::<Result<Vec<_>>>()?;
    let dest = resolve(out, &cfg.paths.extract_output);
    write_features(&dest, &FeatureTable::new("f", ids, rows))?;
    Ok(StageOutcome {
        inputs: vec![weights_path, score_dir(out).join("best_slices.csv")],
        outputs: vec![dest],
        warnings: Vec::new(),
    })
}

pub fn train_ae(cfg: &PipelineConfig, out: &Path) -> Result<StageOutcome> {
    let features_path = resolve(out, &cfg.paths.features);
    let table = read_features(&features_path)?;
    let (model, trace) = Autoencoder::fit(&table.rows, &cfg.train)?;
    let model_path = resolve(out, &cfg.paths.model);
    if let Some(parent) = model_path.parent() {
        mkdir(parent)?;
    }
    model.save(&model_path)?;
    let log = out.join("train_log.csv");
    write_rows(
        &log,
        &["epoch", "mean_mae"],
        trace.iter().enumerate().map(|(e, l)| [e.to_string(), num(*l)]),
    )?;
    Ok(StageOutcome {
        inputs: vec![features_path],
        outputs: vec![model_path, log],
        warnings: Vec::new(),
    })
}

pub fn encode(cfg: &PipelineConfig, out: &Path) -> Result<StageOutcome> {
    let model_path = resolve(out, &cfg.paths.model);
    let model = Autoencoder::load(&model_path)?;
    let features_path = resolve(out, &cfg.paths.features);
    let table = read_features(&features_path)?;
    if table.dim() != model.input_dim() {
        return Err(Error::dims("feature table width versus model input", model.input_dim(), table.dim()));
    }
    let z = model.encode_all(&table.rows)?;
    let dest = resolve(out, &cfg.paths.latent);
    write_features(&dest, &FeatureTable::new("z", table.ids, z))?;
    Ok(StageOutcome {
        inputs: vec![model_path, features_path],
        outputs: vec![dest],
        warnings: Vec::new(),
    })
}

fn aligned_clinical(table: &FeatureTable, clinical: Vec<ClinicalRecord>) -> Result<Vec<ClinicalRecord>> {
    let orphans = orphaned_ids(
        table.ids.iter().map(String::as_str),
        clinical.iter().map(|r| r.case_id.as_str()),
    );
    if !orphans.is_empty() {
        return Err(Error::OrphanedIds(orphans));
    }
    Ok(clinical)
}

pub fn stratify_dir(out: &Path, k: usize) -> PathBuf {
    out.join("stratify").join(format!("k{k}"))
}

/// Table-1 style report line, e.g. `(Low vs High)`.
pub fn pair_label(a: &str, b: &str) -> String {
    format!("({a} vs {b})")
}

pub fn stratify(cfg: &PipelineConfig, out: &Path, k: usize) -> Result<StageOutcome> {
    let input = resolve(out, &cfg.paths.cluster_input);
    let clinical_path = resolve(out, &cfg.paths.clinical);
    let table = read_features(&input)?;
    let clinical = aligned_clinical(&table, read_clinical(&clinical_path)?)?;
    let names = risk_names(k)?;
    let dendrogram = hier_cluster_with(&table.rows, cfg.stratify.linkage)?;
    let labels = cut_tree(&dendrogram, k)?;
    let assignment = assign_risk_labels(
        &ClusterAssignment::new(table.ids.clone(), labels, k)?,
        &clinical,
    )?;
    let tests = pairwise_logrank(&assignment, &clinical)?;
    let curves = cluster_curves(&assignment, &clinical)?;
    let tsne = tsne_embed(&table.rows, &cfg.stratify.tsne.clamped(table.rows.len()))?;

    let dir = stratify_dir(out, k);
    mkdir(&dir)?;
    let mut outputs = Vec::new();
    let risk_of = |c: usize| assignment.risk_name(c).unwrap_or("").to_string();

    let clusters_csv = dir.join(format!("clusters_k{k}.csv"));
    write_rows(
        &clusters_csv,
        &["case_id", "cluster", "risk"],
        assignment
            .case_ids
            .iter()
            .zip(&assignment.clusters)
            .map(|(id, &c)| [id.clone(), c.to_string(), risk_of(c)]),
    )?;
    outputs.push(clusters_csv);

    let mut ranked_curves = Vec::new();
    for (rank, name) in names.iter().enumerate() {
        let c = assignment.cluster_at_rank(rank).expect("bijective ranks");
        let curve = &curves[c];
        let path = dir.join(format!("km_{name}.csv"));
        write_rows(
            &path,
            &["time", "survival", "at_risk", "events", "censored"],
            curve.points.iter().map(|p| {
                [
                    num(p.time),
                    num(p.survival),
                    p.at_risk.to_string(),
                    p.events.to_string(),
                    p.censored.to_string(),
                ]
            }),
        )?;
        outputs.push(path);
        ranked_curves.push((name.to_string(), curve));
    }

    let logrank_csv = dir.join("logrank.csv");
    write_rows(
        &logrank_csv,
        &["group_a", "group_b", "statistic", "p_value"],
        tests.iter().map(|t| {
            [t.group_a.clone(), t.group_b.clone(), num(t.statistic), num(t.p_value)]
        }),
    )?;
    outputs.push(logrank_csv);

    let tsne_csv = dir.join("tsne.csv");
    write_rows(
        &tsne_csv,
        &["case_id", "x", "y", "cluster"],
        table
            .ids
            .iter()
            .zip(&tsne.coords)
            .zip(&assignment.clusters)
            .map(|((id, c), &k)| [id.clone(), num(c[0]), num(c[1]), k.to_string()]),
    )?;
    outputs.push(tsne_csv);

    let km_path = dir.join("km.svg");
    write_text(&km_path, &km_svg(&ranked_curves))?;
    outputs.push(km_path);
    let cluster_names: Vec<String> = (0..k).map(|c| format!("cluster {c} ({})", risk_of(c))).collect();
    let tsne_path = dir.join("tsne.svg");
    write_text(&tsne_path, &tsne_svg(&tsne.coords, &assignment.clusters, &cluster_names))?;
    outputs.push(tsne_path);

    let mut summary = format!("Survival analysis p-values, {k} risk groups\n");
    for t in &tests {
        summary.push_str(&format!(
            "{}\tstatistic={}\tp_value={:.3e}\n",
            pair_label(&t.group_a, &t.group_b),
            num(t.statistic),
            t.p_value
        ));
    }
    let summary_path = dir.join("summary.txt");
    write_text(&summary_path, &summary)?;
    outputs.push(summary_path);

    Ok(StageOutcome {
        inputs: vec![input, clinical_path],
        outputs,
        warnings: Vec::new(),
    })
}

#[derive(Serialize)]
struct ReportRow<'a> {
    method: &'a str,
    accuracy: f64,
    macro_f1: f64,
    weighted_f1: f64,
    per_class: &'a [crate::classify::ClassMetrics],
    confusion: &'a [Vec<usize>],
}

#[derive(Serialize)]
struct Report<'a> {
    class_names: &'a [String],
    train_size: usize,
    test_size: usize,
    methods: Vec<ReportRow<'a>>,
}

pub fn classify(cfg: &PipelineConfig, out: &Path) -> Result<StageOutcome> {
    let input = resolve(out, &cfg.paths.classify_input);
    let clinical_path = resolve(out, &cfg.paths.clinical);
    let table = read_features(&input)?;
    let clinical = aligned_clinical(&table, read_clinical(&clinical_path)?)?;
    let labels = table
        .ids
        .iter()
        .map(|id| {
            clinical
                .iter()
                .find(|r| &r.case_id == id)
                .and_then(|r| r.label.clone())
                .ok_or_else(|| Error::InvalidArgument(format!("case `{id}` has no label")))
        })
        .collect::<Result<Vec<String>>>()?;
    let dataset = LabeledDataset::from_names(table.rows.clone(), &labels)?;
    let eval = evaluate(&dataset, &cfg.classify)?;
    let dir = out.join("classify");
    mkdir(&dir)?;
    let csv_path = dir.join("classification_report.csv");
    write_rows(
        &csv_path,
        &["method", "accuracy", "macro_f1", "weighted_f1"],
        eval.results.iter().map(|r| {
            [
                r.method.clone(),
                num(r.metrics.accuracy),
                num(r.metrics.macro_f1),
                num(r.metrics.weighted_f1),
            ]
        }),
    )?;
    let report = Report {
        class_names: &eval.class_names,
        train_size: eval.split.train.len(),
        test_size: eval.split.test.len(),
        methods: eval
            .results
            .iter()
            .map(|r| ReportRow {
                method: &r.method,
                accuracy: r.metrics.accuracy,
                macro_f1: r.metrics.macro_f1,
                weighted_f1: r.metrics.weighted_f1,
                per_class: &r.metrics.per_class,
                confusion: &r.metrics.confusion,
            })
            .collect(),
    };
    let json_path = dir.join("classification_report.json");
    write_json(&json_path, &report)?;
    Ok(StageOutcome {
        inputs: vec![input, clinical_path],
        outputs: vec![csv_path, json_path],
        warnings: Vec::new(),
    })
}

/// Longest- and shortest-surviving uncensored cases; ties go to the
/// lexicographically smaller id.
pub fn default_explain_cases(clinical: &[ClinicalRecord]) -> Vec<String> {
    let events: Vec<&ClinicalRecord> = clinical.iter().filter(|r| r.event).collect();
    let pick = |longer: bool| {
        events
            .iter()
            .min_by(|a, b| {
                let t = a.time.total_cmp(&b.time);
                (if longer { t.reverse() } else { t }).then(a.case_id.cmp(&b.case_id))
            })
            .map(|r| r.case_id.clone())
    };
    let mut out: Vec<String> = [pick(true), pick(false)].into_iter().flatten().collect();
    out.dedup();
    out
}

pub fn explain(cfg: &PipelineConfig, out: &Path, cases: Option<&[String]>) -> Result<StageOutcome> {
    let model_path = resolve(out, &cfg.paths.model);
    let features_path = resolve(out, &cfg.paths.features);
    let clinical_path = resolve(out, &cfg.paths.clinical);
    let weights_path = resolve(out, &cfg.paths.vit_weights);
    let model = Autoencoder::load(&model_path)?;
    let table = read_features(&features_path)?;
    if table.dim() != model.input_dim() {
        return Err(Error::dims("feature table width versus model input", model.input_dim(), table.dim()));
    }
    let clinical = read_clinical(&clinical_path)?;
    let weights = VitWeights::load(&weights_path)?;
    let ec = &cfg.explain;
    let selected: Vec<String> = match cases {
        Some(c) if !c.is_empty() => c.to_vec(),
        _ if !ec.cases.is_empty() => ec.cases.clone(),
        _ => default_explain_cases(&clinical),
    };
    let scaled = table
        .rows
        .iter()
        .map(|r| model.scale(r))
        .collect::<Result<Vec<_>>>()?;
    let baselines = default_baselines(&scaled, ec.neutral_baselines)?;
    let readout = EncoderReadout {
        params: &model.params,
        target: ec.target,
    };
    let dir = out.join("explain");
    mkdir(&dir)?;
    let mut outcome = StageOutcome {
        inputs: vec![model_path, features_path, clinical_path, weights_path],
        ..Default::default()
    };
    let mut attr_rows = Vec::new();
    let mut diag_rows = Vec::new();
    let mut errors = Vec::new();
    for case in &selected {
        let Some(pos) = table.position(case) else {
            errors.push([case.clone(), "case not present in the feature table".to_string()]);
            continue;
        };
        let mut attr = gradient_shap(&readout, &scaled[pos], &baselines, &ec.shap)?;
        attr.case_id = case.clone();
        attr.target = ec.target;
        let gap = completeness_gap(&attr, &readout, &scaled[pos], &baselines)?;
        let top = top_k_features(&attr.phi, ec.top_k.min(attr.phi.len()))?;
        for (rank, &f) in top.iter().enumerate() {
            attr_rows.push([case.clone(), f.to_string(), num(attr.phi[f]), (rank + 1).to_string()]);
        }
        diag_rows.push([case.clone(), num(gap), attr.n_samples.to_string(), num(attr.noise_sigma)]);

        let tile = match load_best_slice(out, case, weights.config.image_size, cfg.extract.resize) {
            Ok(t) => t,
            Err(e) => {
                errors.push([case.clone(), e.to_string()]);
                continue;
            }
        };
        let loc = match localize_features(&top, &tile, &weights, ec.saliency, ec.top_patches) {
            Ok(l) => l,
            Err(e) => {
                errors.push([case.clone(), e.to_string()]);
                continue;
            }
        };
        let patches = dir.join(format!("patches_{case}.csv"));
        write_rows(
            &patches,
            &["feature_index", "rank", "patch_row", "patch_col", "saliency"],
            loc.features.iter().flat_map(|f| {
                f.top.iter().enumerate().map(move |(r, p)| {
                    [
                        f.feature.to_string(),
                        (r + 1).to_string(),
                        p.row.to_string(),
                        p.col.to_string(),
                        num(p.weight),
                    ]
                })
            }),
        )?;
        let phi: Vec<(usize, f64)> = top.iter().map(|&f| (f, attr.phi[f])).collect();
        let overlay = build_overlay(case, &tile, &loc, &phi, ec.overlay_boxes)?;
        let svg = dir.join(format!("overlay_{case}.svg"));
        let json = dir.join(format!("overlay_{case}.json"));
        write_text(&svg, &render_svg(&overlay)?)?;
        write_json(&json, &overlay)?;
        outcome.outputs.extend([patches, svg, json]);
    }
    let attr_csv = dir.join("attributions.csv");
    write_rows(&attr_csv, &["case_id", "feature_index", "phi", "rank"], attr_rows)?;
    let diag_csv = dir.join("diagnostics.csv");
    write_rows(
        &diag_csv,
        &["case_id", "completeness_gap", "n_samples", "noise_sigma"],
        diag_rows,
    )?;
    outcome.outputs.extend([attr_csv, diag_csv]);
    if !errors.is_empty() {
        let err_csv = dir.join("errors.csv");
        for e in &errors {
            outcome.warnings.push(format!("{}: {}", e[0], e[1]));
        }
        write_rows(&err_csv, &["case_id", "message"], errors)?;
        outcome.outputs.push(err_csv);
    }
    Ok(outcome)
}
