//! Learner input construction: four channels at the scorer's internal
//! resolution.
//!
//! Channel 0 is the grayscale image downsampled by area averaging (zeros
//! when no image is available). Channels 1-3 are detection-derived masks
//! rasterized at frame resolution and downsampled the same way: summed box
//! confidences, summed facing scores, and summed frame-relative box
//! heights. Targets for training are pseudo ground-truth maps downsampled
//! with the same area filter.

use crate::dataset::Frame;
use crate::error::{Error, Result};
use crate::grid::{downsample_area, stamp_box, GridDims, HeatMap};
use crate::learner::FeatureStack;
use crate::priors::{confidence_mask, phi_pose, PriorConfig};

/// Default internal resolution of the scorer.
pub fn internal_dims() -> GridDims {
    GridDims::new(80, 60).expect("static dims")
}

/// Number of channels produced by [`feature_stack`].
pub const FEATURE_CHANNELS: usize = 4;

/// Build the scorer input for one frame. `image` must match the frame
/// dims when present.
pub fn feature_stack(
    frame: &Frame,
    image: Option<&HeatMap>,
    cfg: &PriorConfig,
    out_dims: GridDims,
) -> Result<FeatureStack> {
    let gray = match image {
        Some(img) => {
            if img.dims() != frame.dims {
                return Err(Error::invalid(format!(
                    "image dims differ from frame {} dims",
                    frame.image_id
                )));
            }
            downsample_area(img, out_dims)
        }
        None => HeatMap::zeros(out_dims),
    };

    let conf = downsample_area(&confidence_mask(frame), out_dims);

    let mut facing = HeatMap::zeros(frame.dims);
    let mut height = HeatMap::zeros(frame.dims);
    let frame_h = frame.dims.height() as f64;
    for det in &frame.detections {
        stamp_box(&mut facing, &det.bbox, phi_pose(det, cfg), |cur, v| cur + v);
        stamp_box(&mut height, &det.bbox, det.bbox.h / frame_h, |cur, v| {
            cur + v
        });
    }

    FeatureStack::from_planes(&[
        gray,
        conf,
        downsample_area(&facing, out_dims),
        downsample_area(&height, out_dims),
    ])
}

/// Downsample a frame-resolution label map to the scorer grid.
pub fn downsample_target(map: &HeatMap, out_dims: GridDims) -> HeatMap {
    downsample_area(map, out_dims)
}
