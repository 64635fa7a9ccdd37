//! End-to-end plumbing between dataset, priors, learner, and evaluation:
//! batch pseudo-GT synthesis, training-set assembly at the scorer's
//! internal resolution, scorer evaluation at frame resolution, and the
//! ablation grid.

use std::collections::HashMap;
use std::path::Path;

use crate::dataset::DatasetFile;
use crate::error::{Error, Result};
use crate::eval::{ablation_configs, evaluate, evaluate_pseudo_gt, EvalReport};
use crate::exec;
use crate::features::{downsample_target, feature_stack, internal_dims};
use crate::grid::{upsample_nearest, HeatMap};
use crate::io::pgm::load_pgm;
use crate::learner::{forward, train, FeatureStack, LearnerParams, TrainConfig};
use crate::priors::{pseudo_gt, LocationPriorArtifact, PriorConfig};

/// Pseudo ground truth for every frame, in frame order.
pub fn pseudo_gt_maps(
    ds: &DatasetFile,
    prior: Option<&LocationPriorArtifact>,
    cfg: &PriorConfig,
) -> Result<Vec<(String, HeatMap)>> {
    let maps = exec::map_ordered(&ds.frames, |f| pseudo_gt(f, prior, cfg));
    ds.frames
        .iter()
        .zip(maps)
        .map(|(f, m)| Ok((f.image_id.clone(), m?)))
        .collect()
}

/// Loads each frame's referenced image, resolving relative paths against
/// `base_dir` (normally the dataset file's directory). Frames without an
/// `image_ref` yield `None`.
pub fn load_frame_images(
    ds: &DatasetFile,
    base_dir: impl AsRef<Path>,
) -> Result<Vec<Option<HeatMap>>> {
    let base = base_dir.as_ref();
    ds.frames
        .iter()
        .map(|frame| match &frame.image_ref {
            None => Ok(None),
            Some(rel) => {
                let path = base.join(rel);
                let img = load_pgm(&path).map_err(|e| match e {
                    Error::Io(io) => Error::invalid(format!(
                        "cannot read image {} for frame {}: {io}",
                        path.display(),
                        frame.image_id
                    )),
                    other => other,
                })?;
                if img.dims() != frame.dims {
                    return Err(Error::invalid(format!(
                        "image {} is {}x{} but frame {} is {}x{}",
                        path.display(),
                        img.dims().width(),
                        img.dims().height(),
                        frame.image_id,
                        frame.dims.width(),
                        frame.dims.height()
                    )));
                }
                Ok(Some(img))
            }
        })
        .collect()
}

/// One training pair per frame: the feature stack and the pseudo-GT
/// target, both at the scorer's internal resolution.
pub fn build_training_set(
    ds: &DatasetFile,
    images: &[Option<HeatMap>],
    prior: Option<&LocationPriorArtifact>,
    cfg: &PriorConfig,
) -> Result<Vec<(FeatureStack, HeatMap)>> {
    if images.len() != ds.frames.len() {
        return Err(Error::invalid(format!(
            "{} images supplied for {} frames",
            images.len(),
            ds.frames.len()
        )));
    }
    let dims = internal_dims();
    let indices: Vec<usize> = (0..ds.frames.len()).collect();
    exec::map_ordered(&indices, |&i| {
        let frame = &ds.frames[i];
        let stack = feature_stack(frame, images[i].as_ref(), cfg, dims)?;
        let target = downsample_target(&pseudo_gt(frame, prior, cfg)?, dims);
        Ok((stack, target))
    })
    .into_iter()
    .collect()
}

/// Runs the scorer on every annotated frame and evaluates the upsampled
/// response maps.
pub fn evaluate_learner(
    params: &LearnerParams,
    ds: &DatasetFile,
    images: &[Option<HeatMap>],
    cfg: &PriorConfig,
    config_label: &str,
) -> Result<EvalReport> {
    if images.len() != ds.frames.len() {
        return Err(Error::invalid(format!(
            "{} images supplied for {} frames",
            images.len(),
            ds.frames.len()
        )));
    }
    let dims = internal_dims();
    let annotated: std::collections::HashSet<&str> = ds
        .annotations
        .iter()
        .map(|a| a.image_id.as_str())
        .collect();
    let indices: Vec<usize> = (0..ds.frames.len())
        .filter(|&i| annotated.contains(ds.frames[i].image_id.as_str()))
        .collect();
    let preds = exec::map_ordered(&indices, |&i| -> Result<(String, HeatMap)> {
        let frame = &ds.frames[i];
        let stack = feature_stack(frame, images[i].as_ref(), cfg, dims)?;
        let response = forward(params, &stack)?;
        Ok((
            frame.image_id.clone(),
            upsample_nearest(&response, frame.dims),
        ))
    });
    let mut by_id = HashMap::new();
    for p in preds {
        let (id, map) = p?;
        by_id.insert(id, map);
    }
    evaluate(&by_id, ds, config_label)
}

/// Accuracy of one prior configuration, as raw pseudo-GT and optionally
/// as a scorer trained on that pseudo-GT.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub config_label: String,
    pub pseudo: EvalReport,
    pub trained: Option<EvalReport>,
}

/// Evaluates the full configuration and each single-prior ablation on one
/// dataset. With a training configuration, also trains a scorer per
/// configuration (on that configuration's pseudo-GT over `train_ds`) and
/// evaluates it on `eval_ds`. Without one, `train_ds` is unused.
pub fn run_ablation_grid(
    train_ds: &DatasetFile,
    train_images: &[Option<HeatMap>],
    eval_ds: &DatasetFile,
    eval_images: &[Option<HeatMap>],
    prior: &LocationPriorArtifact,
    base_cfg: &PriorConfig,
    train_cfg: Option<&TrainConfig>,
) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::with_capacity(4);
    for cfg in ablation_configs(base_cfg) {
        let label = cfg.ablation_label();
        let pseudo = evaluate_pseudo_gt(eval_ds, Some(prior), &cfg)?;
        let trained = match train_cfg {
            None => None,
            Some(tc) => {
                let data = build_training_set(train_ds, train_images, Some(prior), &cfg)?;
                let outcome = train(&data, tc)?;
                Some(evaluate_learner(
                    &outcome.params,
                    eval_ds,
                    eval_images,
                    &cfg,
                    &format!("trained-{label}"),
                )?)
            }
        };
        rows.push(AblationRow {
            config_label: label,
            pseudo,
            trained,
        });
    }
    Ok(rows)
}
