//! Compact per-pixel intent scorer: a fixed three-layer convolutional
//! network trained on pseudo ground truth with a sigmoid cross-entropy
//! objective summed over pixels.
//!
//! Layers: 5x5 conv (input channels -> 8), ReLU, 3x3 conv (8 -> 8), ReLU,
//! 1x1 conv (8 -> 1), sigmoid. All convolutions use same-padding so the
//! output heatmap matches the input resolution. Gradients are derived by
//! hand in [`backprop`] and checked against finite differences in
//! [`gradcheck`].

mod backprop;
mod gradcheck;
mod train;

pub use backprop::{loss, loss_and_gradient, LossInfo};
pub use gradcheck::{relative_error, run_grad_check, sample_triple, GradCheckConfig, GradCheckReport};
pub use train::{train, TrainConfig, TrainOutcome};

use crate::error::{Error, Result};
use crate::grid::{GridDims, HeatMap};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Multi-channel input grid in channel-major order: the value of channel
/// `c` at `(col, row)` sits at `c*W*H + row*W + col`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStack {
    dims: GridDims,
    channels: usize,
    values: Vec<f64>,
}

impl FeatureStack {
    pub fn new(dims: GridDims, channels: usize, values: Vec<f64>) -> Result<Self> {
        if channels == 0 {
            return Err(Error::invalid("feature stack needs at least one channel"));
        }
        if values.len() != channels * dims.pixel_count() {
            return Err(Error::invalid(format!(
                "feature buffer length {} does not match {} channels of {}x{}",
                values.len(),
                channels,
                dims.width(),
                dims.height()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("feature values must be finite"));
        }
        Ok(FeatureStack {
            dims,
            channels,
            values,
        })
    }

    pub fn zeros(dims: GridDims, channels: usize) -> Self {
        FeatureStack {
            dims,
            channels,
            values: vec![0.0; channels * dims.pixel_count()],
        }
    }

    /// Stack single-channel maps (all of equal dims) into one input.
    pub fn from_planes(planes: &[HeatMap]) -> Result<Self> {
        let dims = planes
            .first()
            .ok_or_else(|| Error::invalid("feature stack needs at least one channel"))?
            .dims();
        let mut values = Vec::with_capacity(planes.len() * dims.pixel_count());
        for p in planes {
            if p.dims() != dims {
                return Err(Error::invalid("feature planes must share dims"));
            }
            values.extend_from_slice(p.as_slice());
        }
        FeatureStack::new(dims, planes.len(), values)
    }

    pub fn dims(&self) -> GridDims {
        self.dims
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.dims.pixel_count();
        &self.values[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.dims.pixel_count();
        &mut self.values[c * n..(c + 1) * n]
    }
}

/// One bank of square convolution kernels plus per-output biases.
/// Weight of output `o`, input `i`, kernel row `ky`, kernel column `kx`
/// sits at `((o*in_ch + i)*k + ky)*k + kx`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub in_ch: usize,
    pub out_ch: usize,
    pub k: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl ConvLayer {
    pub fn zeros(in_ch: usize, out_ch: usize, k: usize) -> Self {
        ConvLayer {
            in_ch,
            out_ch,
            k,
            weights: vec![0.0; out_ch * in_ch * k * k],
            biases: vec![0.0; out_ch],
        }
    }

    #[inline]
    pub fn w_index(&self, o: usize, i: usize, ky: usize, kx: usize) -> usize {
        ((o * self.in_ch + i) * self.k + ky) * self.k + kx
    }

    fn validate(&self, name: &str, in_ch: usize, out_ch: usize, k: usize) -> Result<()> {
        if self.in_ch != in_ch || self.out_ch != out_ch || self.k != k {
            return Err(Error::invalid(format!(
                "{name} must be a {k}x{k} bank mapping {in_ch} -> {out_ch} channels"
            )));
        }
        if self.weights.len() != out_ch * in_ch * k * k || self.biases.len() != out_ch {
            return Err(Error::invalid(format!("{name} buffer lengths inconsistent")));
        }
        if self.weights.iter().chain(&self.biases).any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("{name} contains non-finite values")));
        }
        Ok(())
    }
}

/// Hidden width of the two intermediate layers.
pub const HIDDEN_CHANNELS: usize = 8;
/// Kernel sizes of the three layers in order.
pub const KERNEL_SIZES: [usize; 3] = [5, 3, 1];

/// Full parameter set of the scorer. Also serves as the gradient container:
/// `loss_and_gradient` returns d(loss)/d(theta) in the same shape.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnerParams {
    pub conv1: ConvLayer,
    pub conv2: ConvLayer,
    pub conv3: ConvLayer,
}

impl LearnerParams {
    pub fn zeros(input_channels: usize) -> Self {
        LearnerParams {
            conv1: ConvLayer::zeros(input_channels, HIDDEN_CHANNELS, KERNEL_SIZES[0]),
            conv2: ConvLayer::zeros(HIDDEN_CHANNELS, HIDDEN_CHANNELS, KERNEL_SIZES[1]),
            conv3: ConvLayer::zeros(HIDDEN_CHANNELS, 1, KERNEL_SIZES[2]),
        }
    }

    pub fn input_channels(&self) -> usize {
        self.conv1.in_ch
    }

    pub fn validate(&self) -> Result<()> {
        self.conv1.validate(
            "conv1",
            self.conv1.in_ch.max(1),
            HIDDEN_CHANNELS,
            KERNEL_SIZES[0],
        )?;
        self.conv2
            .validate("conv2", HIDDEN_CHANNELS, HIDDEN_CHANNELS, KERNEL_SIZES[1])?;
        self.conv3.validate("conv3", HIDDEN_CHANNELS, 1, KERNEL_SIZES[2])?;
        Ok(())
    }

    /// Number of scalar parameters across all layers.
    pub fn coord_count(&self) -> usize {
        self.layer_slices().iter().map(|s| s.len()).sum()
    }

    /// Read the parameter at a flat index over the declared order:
    /// conv1 weights, conv1 biases, conv2 weights, conv2 biases,
    /// conv3 weights, conv3 bias.
    pub fn get_coord(&self, mut idx: usize) -> f64 {
        for s in self.layer_slices() {
            if idx < s.len() {
                return s[idx];
            }
            idx -= s.len();
        }
        panic!("parameter index out of range");
    }

    /// Write the parameter at a flat index (same order as [`get_coord`]).
    ///
    /// [`get_coord`]: LearnerParams::get_coord
    pub fn set_coord(&mut self, mut idx: usize, v: f64) {
        for s in self.layer_slices_mut() {
            if idx < s.len() {
                s[idx] = v;
                return;
            }
            idx -= s.len();
        }
        panic!("parameter index out of range");
    }

    fn layer_slices(&self) -> [&[f64]; 6] {
        [
            &self.conv1.weights,
            &self.conv1.biases,
            &self.conv2.weights,
            &self.conv2.biases,
            &self.conv3.weights,
            &self.conv3.biases,
        ]
    }

    fn layer_slices_mut(&mut self) -> [&mut [f64]; 6] {
        [
            &mut self.conv1.weights,
            &mut self.conv1.biases,
            &mut self.conv2.weights,
            &mut self.conv2.biases,
            &mut self.conv3.weights,
            &mut self.conv3.biases,
        ]
    }
}

/// Seeded initialization: weights uniform in +-sqrt(3/fan_in), biases zero.
pub fn init_params(channels: usize, seed: u64) -> Result<LearnerParams> {
    if channels == 0 {
        return Err(Error::invalid("learner needs at least one input channel"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = LearnerParams::zeros(channels);
    for layer in [&mut params.conv1, &mut params.conv2, &mut params.conv3] {
        let bound = (3.0 / (layer.in_ch * layer.k * layer.k) as f64).sqrt();
        for w in &mut layer.weights {
            *w = bound * (2.0 * rng.random::<f64>() - 1.0);
        }
    }
    Ok(params)
}

/// Out-index range `lo..hi` such that the shifted in-index `out + off`
/// stays inside `0..extent`.
#[inline]
pub(crate) fn shifted_range(extent: usize, off: isize) -> (usize, usize) {
    let lo = (-off).max(0) as usize;
    let hi = (extent as isize - off.max(0)).max(0) as usize;
    (lo, hi)
}

/// Same-padded 2-D convolution (cross-correlation) of a channel stack.
pub(crate) fn conv_same(x: &FeatureStack, layer: &ConvLayer) -> FeatureStack {
    let dims = x.dims();
    let (w, h) = (dims.width(), dims.height());
    let pad = (layer.k / 2) as isize;
    let mut out = FeatureStack::zeros(dims, layer.out_ch);
    for o in 0..layer.out_ch {
        let plane = out.plane_mut(o);
        plane.fill(layer.biases[o]);
        for i in 0..layer.in_ch {
            let src = x.plane(i);
            for ky in 0..layer.k {
                let oy = ky as isize - pad;
                let (y_lo, y_hi) = shifted_range(h, oy);
                for kx in 0..layer.k {
                    let ox = kx as isize - pad;
                    let (x_lo, x_hi) = shifted_range(w, ox);
                    if x_lo >= x_hi {
                        continue;
                    }
                    let wgt = layer.weights[layer.w_index(o, i, ky, kx)];
                    for y in y_lo..y_hi {
                        let iy = (y as isize + oy) as usize;
                        let sx = (x_lo as isize + ox) as usize;
                        let dst = &mut plane[y * w + x_lo..y * w + x_hi];
                        let srow = &src[iy * w + sx..iy * w + sx + (x_hi - x_lo)];
                        for (d, &s) in dst.iter_mut().zip(srow) {
                            *d += wgt * s;
                        }
                    }
                }
            }
        }
    }
    out
}

pub(crate) fn relu_inplace(x: &mut FeatureStack) {
    for v in &mut x.values {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

#[inline]
pub(crate) fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Post-activation state of one forward pass, kept for backpropagation.
pub(crate) struct ForwardTrace {
    pub a1: FeatureStack,
    pub a2: FeatureStack,
    pub pred: HeatMap,
}

pub(crate) fn forward_trace(params: &LearnerParams, input: &FeatureStack) -> Result<ForwardTrace> {
    params.validate()?;
    if input.channels != params.conv1.in_ch {
        return Err(Error::invalid(format!(
            "input has {} channels, scorer expects {}",
            input.channels, params.conv1.in_ch
        )));
    }
    let dims = input.dims();
    let min_extent = KERNEL_SIZES[0];
    if dims.width() < min_extent || dims.height() < min_extent {
        return Err(Error::invalid(format!(
            "input {}x{} smaller than the {}x{} kernel extent",
            dims.width(),
            dims.height(),
            min_extent,
            min_extent
        )));
    }
    let mut a1 = conv_same(input, &params.conv1);
    relu_inplace(&mut a1);
    let mut a2 = conv_same(&a1, &params.conv2);
    relu_inplace(&mut a2);
    let z3 = conv_same(&a2, &params.conv3);
    let mut pred = HeatMap::zeros(dims);
    for (p, &z) in pred.as_mut_slice().iter_mut().zip(z3.plane(0)) {
        *p = sigmoid(z);
    }
    Ok(ForwardTrace { a1, a2, pred })
}

/// Run the scorer: three same-padded convolutions with ReLU between them
/// and a sigmoid on the single output channel.
pub fn forward(params: &LearnerParams, input: &FeatureStack) -> Result<HeatMap> {
    Ok(forward_trace(params, input)?.pred)
}
