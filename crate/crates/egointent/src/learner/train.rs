//! Mini-batch SGD with momentum and weight decay over (features, target)
//! pairs.
//!
//! Each epoch shuffles the sample order with a seeded generator and walks
//! it in batches; a short final batch is used as-is. Per-sample gradients
//! within a batch may be computed in parallel but are reduced in sample
//! order, so a run is bit-reproducible for a fixed dataset order and seed
//! in both execution modes.

use super::backprop::loss_and_gradient;
use super::{init_params, FeatureStack, LearnerParams};
use crate::error::{Error, Result};
use crate::exec;
use crate::grid::HeatMap;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Optimizer settings. Defaults: learning rate 0.01, momentum 0.9, weight
/// decay 0.0005, batch size 15, 5000 iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            momentum: 0.9,
            weight_decay: 0.0005,
            batch_size: 15,
            iterations: 5000,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::invalid("learning_rate must be positive and finite"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("momentum must be in [0,1)"));
        }
        if !(self.weight_decay >= 0.0) || !self.weight_decay.is_finite() {
            return Err(Error::invalid("weight_decay must be nonnegative and finite"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        if self.iterations == 0 {
            return Err(Error::invalid("iterations must be at least 1"));
        }
        Ok(())
    }
}

/// Final parameters plus the batch-mean loss recorded at every iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: LearnerParams,
    pub losses: Vec<f64>,
}

/// Decouple the shuffle stream from parameter initialization, which uses
/// cfg.seed directly.
const SHUFFLE_SALT: u64 = 0x9E37_79B9_7F4A_7C15;

/// Parameter magnitude past which training is declared divergent: three
/// stacked convolutions of such weights overflow double precision.
const DIVERGENCE_BOUND: f64 = 1e60;

/// One optimizer step. Weights take `w -= lr*(grad + wd*w)` folded into the
/// momentum buffer; biases are exempt from decay.
fn apply_update(
    params: &mut LearnerParams,
    velocity: &mut LearnerParams,
    grad: &LearnerParams,
    cfg: &TrainConfig,
) {
    let layers = [
        (&mut params.conv1, &mut velocity.conv1, &grad.conv1),
        (&mut params.conv2, &mut velocity.conv2, &grad.conv2),
        (&mut params.conv3, &mut velocity.conv3, &grad.conv3),
    ];
    for (p, v, g) in layers {
        for ((w, vw), &gw) in p.weights.iter_mut().zip(&mut v.weights).zip(&g.weights) {
            let decayed = gw + cfg.weight_decay * *w;
            *vw = cfg.momentum * *vw - cfg.learning_rate * decayed;
            *w += *vw;
        }
        for ((b, vb), &gb) in p.biases.iter_mut().zip(&mut v.biases).zip(&g.biases) {
            *vb = cfg.momentum * *vb - cfg.learning_rate * gb;
            *b += *vb;
        }
    }
}

fn add_scaled(into: &mut LearnerParams, from: &LearnerParams, scale: f64) {
    let pairs = [
        (&mut into.conv1, &from.conv1),
        (&mut into.conv2, &from.conv2),
        (&mut into.conv3, &from.conv3),
    ];
    for (a, b) in pairs {
        for (x, &y) in a.weights.iter_mut().zip(&b.weights) {
            *x += scale * y;
        }
        for (x, &y) in a.biases.iter_mut().zip(&b.biases) {
            *x += scale * y;
        }
    }
}

/// Mean target value over every sample and pixel, clamped away from the
/// endpoints so its logit stays finite.
fn target_base_rate(data: &[(FeatureStack, HeatMap)]) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for (_, target) in data {
        sum += target.as_slice().iter().sum::<f64>();
        count += target.as_slice().len();
    }
    (sum / count as f64).clamp(1e-6, 1.0 - 1e-6)
}

/// Shift the output bias so the mean pre-sigmoid response over the dataset
/// equals the logit of the mean target value. Run before the first step:
/// it cancels the otherwise dominant uniform component of the first
/// gradients, which under the pixel-summed loss is large enough that
/// momentum carries the output into saturation before any structure can
/// form.
fn align_output_bias(params: &mut LearnerParams, data: &[(FeatureStack, HeatMap)]) -> Result<()> {
    let rate = target_base_rate(data);
    let responses = exec::map_ordered(data, |(input, _)| super::forward(params, input));
    let mut sum = 0.0;
    let mut count = 0usize;
    for r in responses {
        let map = r?;
        for &g in map.as_slice() {
            sum += (g / (1.0 - g)).ln();
        }
        count += map.as_slice().len();
    }
    params.conv3.biases[0] += (rate / (1.0 - rate)).ln() - sum / count as f64;
    Ok(())
}

/// Train the scorer from a seeded initialization. Deterministic given the
/// dataset order and `cfg.seed`; aborts with a divergence error if the
/// batch loss stops being finite.
pub fn train(data: &[(FeatureStack, HeatMap)], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let (first_input, _) = data
        .first()
        .ok_or_else(|| Error::invalid("training set must be nonempty"))?;
    let dims = first_input.dims();
    let channels = first_input.channels();
    for (i, (input, target)) in data.iter().enumerate() {
        if input.dims() != dims || input.channels() != channels {
            return Err(Error::invalid(format!(
                "sample {i}: feature shape differs from sample 0"
            )));
        }
        if target.dims() != dims {
            return Err(Error::invalid(format!(
                "sample {i}: target dims differ from its features"
            )));
        }
    }

    let mut params = init_params(channels, cfg.seed)?;
    align_output_bias(&mut params, data)?;
    let mut velocity = LearnerParams::zeros(channels);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ SHUFFLE_SALT);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut losses = Vec::with_capacity(cfg.iterations);

    'training: loop {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            if losses.len() == cfg.iterations {
                break 'training;
            }
            let results = exec::map_ordered(batch, |&idx| {
                loss_and_gradient(&params, &data[idx].0, &data[idx].1)
            });
            let scale = 1.0 / batch.len() as f64;
            let mut mean_loss = 0.0;
            let mut mean_grad = LearnerParams::zeros(channels);
            for r in results {
                let (info, grad) = r?;
                mean_loss += scale * info.value;
                add_scaled(&mut mean_grad, &grad, scale);
            }
            apply_update(&mut params, &mut velocity, &mean_grad, cfg);
            // The clamp keeps the loss itself finite, so a blow-up shows
            // first in the parameters: non-finite, or large enough that
            // the next forward pass would overflow.
            let exploded = params
                .layer_slices()
                .iter()
                .any(|s| s.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_BOUND));
            if !mean_loss.is_finite() || exploded {
                return Err(Error::Diverged {
                    iteration: losses.len(),
                });
            }
            losses.push(mean_loss);
        }
    }

    Ok(TrainOutcome { params, losses })
}
