//! Ground-truth rendering, the argmax-player accuracy metric, and the
//! prior-ablation runner.
//!
//! A prediction map scores each detected player by its maximum value
//! inside the player's box; the player with the largest score is the
//! predicted cooperator and counts as correct when its box overlaps the
//! annotated cooperator box with IoU at least 0.5.

use std::collections::HashMap;

use crate::dataset::{DatasetFile, Frame, GTAnnotation, PersonDetection};
use crate::error::{Error, Result};
use crate::exec;
use crate::grid::{BBox, GridDims, HeatMap};
use crate::priors::{pseudo_gt, LocationPriorArtifact, PriorConfig};

/// Minimum IoU between the predicted box and the annotation to count as
/// correct.
pub const MATCH_IOU: f64 = 0.5;

/// One evaluated image.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub image_id: String,
    pub predicted_index: usize,
    pub correct: bool,
}

/// Accuracy over a dataset under one configuration label.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub config_label: String,
    pub per_image: Vec<EvalRecord>,
    pub accuracy: f64,
}

impl EvalReport {
    pub fn from_records(config_label: String, per_image: Vec<EvalRecord>) -> Self {
        let correct = per_image.iter().filter(|r| r.correct).count();
        let accuracy = correct as f64 / per_image.len() as f64;
        EvalReport {
            config_label,
            per_image,
            accuracy,
        }
    }

    pub fn correct_count(&self) -> usize {
        self.per_image.iter().filter(|r| r.correct).count()
    }
}

/// Truncated Gaussian label: peak-1 Gaussian at the box center with
/// standard deviations w/4 and h/4, zero outside the clipped box.
pub fn render_gaussian_gt(ann: &GTAnnotation, dims: GridDims) -> Result<HeatMap> {
    ann.cooperator_box.validate()?;
    let b = &ann.cooperator_box;
    let (cx, cy) = b.center();
    let sx = b.w / 4.0;
    let sy = b.h / 4.0;
    let mut map = HeatMap::zeros(dims);
    let (cols, rows) = b.pixel_span(dims);
    for row in rows {
        let py = row as f64 + 0.5;
        let dy = (py - cy) / sy;
        for col in cols.clone() {
            let px = col as f64 + 0.5;
            let dx = (px - cx) / sx;
            map.set(col, row, (-0.5 * (dx * dx + dy * dy)).exp());
        }
    }
    Ok(map)
}

/// Maximum prediction value over pixels inside the clipped box; 0 when the
/// box misses the grid entirely.
pub fn player_score(pred: &HeatMap, bbox: &BBox) -> f64 {
    let (cols, rows) = bbox.pixel_span(pred.dims());
    let mut best = 0.0f64;
    let mut any = false;
    for row in rows {
        for col in cols.clone() {
            let v = pred.get(col, row);
            if !any || v > best {
                best = v;
                any = true;
            }
        }
    }
    if any {
        best
    } else {
        0.0
    }
}

/// Index of the detection with the largest player score; ties go to the
/// lowest index.
pub fn predict_cooperator(pred: &HeatMap, frame: &Frame) -> Result<usize> {
    if frame.detections.is_empty() {
        return Err(Error::NoCandidates);
    }
    let mut best_idx = 0;
    let mut best = f64::NEG_INFINITY;
    for (i, det) in frame.detections.iter().enumerate() {
        let s = player_score(pred, &det.bbox);
        if s > best {
            best = s;
            best_idx = i;
        }
    }
    Ok(best_idx)
}

/// Intersection-over-union of two boxes.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let ix = (a.x + a.w).min(b.x + b.w) - a.x.max(b.x);
    let iy = (a.y + a.h).min(b.y + b.h) - a.y.max(b.y);
    if ix <= 0.0 || iy <= 0.0 {
        return 0.0;
    }
    let inter = ix * iy;
    inter / (a.w * a.h + b.w * b.h - inter)
}

/// True when the predicted detection overlaps the annotated cooperator box
/// with IoU >= 0.5.
pub fn detection_matches(predicted: &PersonDetection, ann: &GTAnnotation) -> bool {
    iou(&predicted.bbox, &ann.cooperator_box) >= MATCH_IOU
}

/// Score every annotated image of a dataset against prediction maps keyed
/// by image id.
pub fn evaluate(
    preds: &HashMap<String, HeatMap>,
    ds: &DatasetFile,
    config_label: &str,
) -> Result<EvalReport> {
    if ds.annotations.is_empty() {
        return Err(Error::invalid("evaluation needs at least one annotation"));
    }
    let mut missing: Vec<String> = ds
        .annotations
        .iter()
        .filter(|a| !preds.contains_key(&a.image_id))
        .map(|a| a.image_id.clone())
        .collect();
    if !missing.is_empty() {
        missing.sort();
        missing.dedup();
        return Err(Error::IncompleteInput { missing });
    }
    let mut per_image = Vec::with_capacity(ds.annotations.len());
    for ann in &ds.annotations {
        let frame = ds.frame(&ann.image_id).ok_or_else(|| {
            Error::invalid(format!("annotation references unknown frame {}", ann.image_id))
        })?;
        let pred = &preds[&ann.image_id];
        let idx = predict_cooperator(pred, frame)?;
        per_image.push(EvalRecord {
            image_id: ann.image_id.clone(),
            predicted_index: idx,
            correct: detection_matches(&frame.detections[idx], ann),
        });
    }
    Ok(EvalReport::from_records(config_label.into(), per_image))
}

/// Pseudo-GT accuracy: synthesize the label map for every annotated frame
/// and evaluate it as the prediction.
pub fn evaluate_pseudo_gt(
    ds: &DatasetFile,
    prior: Option<&LocationPriorArtifact>,
    cfg: &PriorConfig,
) -> Result<EvalReport> {
    let frames: Vec<&Frame> = ds
        .annotations
        .iter()
        .map(|a| {
            ds.frame(&a.image_id).ok_or_else(|| {
                Error::invalid(format!(
                    "annotation references unknown frame {}",
                    a.image_id
                ))
            })
        })
        .collect::<Result<_>>()?;
    let maps = exec::map_ordered(&frames, |f| pseudo_gt(f, prior, cfg));
    let mut preds = HashMap::new();
    for (f, m) in frames.iter().zip(maps) {
        preds.insert(f.image_id.clone(), m?);
    }
    evaluate(&preds, ds, &cfg.ablation_label())
}

/// The four standard prior configurations: full, then each prior disabled
/// in turn.
pub fn ablation_configs(base: &PriorConfig) -> [PriorConfig; 4] {
    let mut no_loc = base.clone();
    no_loc.use_loc = false;
    let mut no_size = base.clone();
    no_size.use_size = false;
    let mut no_pose = base.clone();
    no_pose.use_pose = false;
    [base.clone(), no_loc, no_size, no_pose]
}

/// Pseudo-GT accuracy for the full configuration and each single-prior
/// ablation.
pub fn run_ablations(
    ds: &DatasetFile,
    prior: &LocationPriorArtifact,
    base_cfg: &PriorConfig,
) -> Result<Vec<EvalReport>> {
    ablation_configs(base_cfg)
        .iter()
        .map(|cfg| evaluate_pseudo_gt(ds, Some(prior), cfg))
        .collect()
}
