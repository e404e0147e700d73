use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use pyrdepth_core::metrics::{compute_metrics, disparity_to_depth, eval_crop_mask};
use pyrdepth_core::tensor::bilinear_resize;
use pyrdepth_core::{CameraModel, DepthMetrics, Tensor};
use rayon::prelude::*;

use crate::raster;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Crop {
    Eigen,
    None,
}

/// What the prediction rasters hold.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PredKind {
    /// Disparity in pixels, as written by `infer`.
    Disparity,
    /// Depth in metres, the same encoding as the ground truth.
    Depth,
}

#[derive(Clone, Debug)]
pub struct EvalConfig {
    pub pred_dir: PathBuf,
    pub gt_dir: PathBuf,
    pub camera: CameraModel,
    pub cap_m: f64,
    pub crop: Crop,
    pub pred_kind: PredKind,
    pub output: PathBuf,
}

#[derive(Clone, Debug)]
pub struct EvalReport {
    /// Sorted by image stem.
    pub per_image: Vec<(String, DepthMetrics)>,
    pub aggregate: DepthMetrics,
    /// Stems present in only one of the two directories.
    pub skipped: Vec<String>,
}

fn png_stems(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("cannot list {}", dir.display()))? {
        let path = entry?.path();
        let is_png = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if let (true, Some(stem)) = (is_png, path.file_stem()) {
            out.insert(stem.to_string_lossy().into_owned(), path);
        }
    }
    Ok(out)
}

/// Converts a prediction raster to depth on the ground-truth grid.
pub fn prediction_depth(pred: &Tensor, kind: PredKind, cam: &CameraModel, h: usize, w: usize) -> Result<Tensor> {
    let ps = pred.shape();
    let resized = if (ps.h, ps.w) == (h, w) {
        pred.clone()
    } else {
        bilinear_resize(pred, h, w)?
    };
    Ok(match kind {
        PredKind::Disparity => {
            let ratio = w as f32 / ps.w as f32;
            disparity_to_depth(&resized.map(|d| d * ratio), cam)
        }
        PredKind::Depth => resized.map(|z| z.max(cam.min_depth_m as f32)),
    })
}

pub fn evaluate_pair(pred: &Tensor, gt: &Tensor, cfg: &EvalConfig) -> Result<DepthMetrics> {
    let gs = gt.shape();
    let depth = prediction_depth(pred, cfg.pred_kind, &cfg.camera, gs.h, gs.w)?;
    let valid = gt.map(|g| (g > 0.0) as u8 as f32);
    let mask = match cfg.crop {
        Crop::Eigen => valid.zip_map(&eval_crop_mask(gs.h, gs.w)?, |a, b| a * b)?,
        Crop::None => valid,
    };
    Ok(compute_metrics(&depth, gt, &mask, cfg.cap_m)?)
}

pub fn run_eval(cfg: &EvalConfig) -> Result<EvalReport> {
    let preds = png_stems(&cfg.pred_dir)?;
    let gts = png_stems(&cfg.gt_dir)?;
    let matched: Vec<(&String, &PathBuf, &PathBuf)> =
        gts.iter().filter_map(|(s, g)| preds.get(s).map(|p| (s, p, g))).collect();
    let skipped: Vec<String> = gts
        .keys()
        .chain(preds.keys())
        .filter(|s| !(gts.contains_key(*s) && preds.contains_key(*s)))
        .cloned()
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    if matched.is_empty() {
        bail!(
            "no prediction in {} has a ground-truth file of the same name in {}",
            cfg.pred_dir.display(),
            cfg.gt_dir.display()
        );
    }
    let per_image = matched
        .par_iter()
        .map(|(stem, p, g)| {
            let pred = raster::load_scaled_u16(p)?;
            let gt = raster::load_scaled_u16(g)?;
            let m = evaluate_pair(&pred, &gt, cfg).with_context(|| format!("evaluating {stem}"))?;
            Ok(((*stem).clone(), m))
        })
        .collect::<Result<Vec<_>>>()?;
    let items: Vec<DepthMetrics> = per_image.iter().map(|(_, m)| *m).collect();
    let aggregate = DepthMetrics::mean(&items).expect("at least one image");
    Ok(EvalReport {
        per_image,
        aggregate,
        skipped,
    })
}

/// Sibling of the aggregate CSV holding one row per image.
pub fn per_image_path(output: &Path) -> PathBuf {
    let stem = output.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    output.with_file_name(format!("{stem}_per_image.csv"))
}

fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

fn metric_fields(m: &DepthMetrics) -> Vec<String> {
    m.as_array().iter().map(|v| format!("{v:.6}")).collect()
}

pub fn cmd_eval(cfg: &EvalConfig) -> Result<EvalReport> {
    let report = run_eval(cfg)?;
    for stem in &report.skipped {
        eprintln!("skipped {stem}: no matching file in the other directory");
    }
    write_csv(&cfg.output, &DepthMetrics::CSV_HEADER, [metric_fields(&report.aggregate)])?;
    let mut header = vec!["image"];
    header.extend(DepthMetrics::CSV_HEADER);
    write_csv(
        &per_image_path(&cfg.output),
        &header,
        report.per_image.iter().map(|(stem, m)| {
            let mut row = vec![stem.clone()];
            row.extend(metric_fields(m));
            row
        }),
    )?;
    println!(
        "evaluated {} images ({} skipped): abs_rel {:.4} rmse {:.4} d1 {:.4}",
        report.per_image.len(),
        report.skipped.len(),
        report.aggregate.abs_rel,
        report.aggregate.rmse,
        report.aggregate.d1
    );
    Ok(report)
}
