//! Egocentric priors and their composition into pseudo ground-truth maps.
//!
//! Three per-detection cues score how likely each detected player is the
//! camera wearer's cooperator: a location prior (where detections
//! concentrate across the dataset, times the current frame's confidence
//! mask), a size prior (taller boxes are closer), and a pose prior
//! (fraction of left/right part pairs consistent with facing the wearer).
//! `pseudo_gt` composes them into a per-pixel label map: each detection's
//! box is painted with its size*pose weight, the paintings are summed,
//! optionally multiplied by the location prior, and the result is
//! normalized to peak at 1.

use crate::dataset::{parts, Frame, PersonDetection};
use crate::error::{Error, Result};
use crate::exec;
use crate::grid::{
    accumulate, elementwise_mul, normalize_max, stamp_box, BBox, GridDims, HeatMap,
};

/// (right part id, left part id) pairs scored by the pose prior, in the
/// 18-part convention of [`parts`].
pub const DEFAULT_PAIRS: [(usize, usize); 8] = [
    (parts::R_EYE, parts::L_EYE),
    (parts::R_EAR, parts::L_EAR),
    (parts::R_SHOULDER, parts::L_SHOULDER),
    (parts::R_ELBOW, parts::L_ELBOW),
    (parts::R_WRIST, parts::L_WRIST),
    (parts::R_HIP, parts::L_HIP),
    (parts::R_KNEE, parts::L_KNEE),
    (parts::R_ANKLE, parts::L_ANKLE),
];

/// Configuration of the three priors and their ablation switches.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorConfig {
    /// Size-prior scale in pixels of box height.
    pub sigma: f64,
    /// Keypoint score strictly above which a part counts as visible.
    pub visibility_threshold: f64,
    /// (right, left) part-id pairs the pose prior averages over.
    pub pairs: Vec<(usize, usize)>,
    pub use_loc: bool,
    pub use_size: bool,
    pub use_pose: bool,
    /// Pose-prior value when no pair is visible.
    pub pose_fallback: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig {
            sigma: 10.0,
            visibility_threshold: 0.1,
            pairs: DEFAULT_PAIRS.to_vec(),
            use_loc: true,
            use_size: true,
            use_pose: true,
            pose_fallback: 0.5,
        }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::invalid(format!(
                "sigma must be positive and finite, got {}",
                self.sigma
            )));
        }
        if !(0.0..=1.0).contains(&self.visibility_threshold) {
            return Err(Error::invalid("visibility_threshold must be in [0,1]"));
        }
        if !(0.0..=1.0).contains(&self.pose_fallback) {
            return Err(Error::invalid("pose_fallback must be in [0,1]"));
        }
        if self.pairs.is_empty() {
            return Err(Error::invalid("pose pair list must be nonempty"));
        }
        for &(r, l) in &self.pairs {
            if r >= parts::COUNT || l >= parts::COUNT || r == l {
                return Err(Error::invalid(format!(
                    "pose pair ({r}, {l}) must reference distinct part ids below {}",
                    parts::COUNT
                )));
            }
        }
        Ok(())
    }

    /// Label naming the active prior set, used in reports.
    pub fn ablation_label(&self) -> String {
        match (self.use_loc, self.use_size, self.use_pose) {
            (true, true, true) => "full".into(),
            (false, true, true) => "no-loc".into(),
            (true, false, true) => "no-size".into(),
            (true, true, false) => "no-pose".into(),
            (l, s, p) => {
                let mut off = Vec::new();
                if !l {
                    off.push("loc");
                }
                if !s {
                    off.push("size");
                }
                if !p {
                    off.push("pose");
                }
                format!("no-{}", off.join("-"))
            }
        }
    }
}

/// Dataset-mean confidence mask, the learned factor of the location prior.
#[derive(Debug, Clone, PartialEq)]
pub struct LocationPriorArtifact {
    pub dims: GridDims,
    pub mean_mask: HeatMap,
    pub image_count: u64,
}

impl LocationPriorArtifact {
    pub fn validate(&self) -> Result<()> {
        if self.image_count < 1 {
            return Err(Error::invalid("location prior image_count must be >= 1"));
        }
        if self.mean_mask.dims() != self.dims {
            return Err(Error::invalid("location prior mask dims mismatch"));
        }
        if self.mean_mask.as_slice().iter().any(|&v| v < 0.0) {
            return Err(Error::invalid("location prior mask must be nonnegative"));
        }
        Ok(())
    }
}

/// Size prior exp(-sigma/h): strictly increasing in box height, in (0,1).
pub fn phi_size(bbox: &BBox, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::invalid(format!(
            "sigma must be positive and finite, got {sigma}"
        )));
    }
    if !(bbox.h > 0.0) {
        return Err(Error::invalid(format!(
            "box height must be positive, got {}",
            bbox.h
        )));
    }
    Ok((-sigma / bbox.h).exp())
}

/// Pose prior: over pairs whose both parts score strictly above the
/// visibility threshold, the fraction with the right part strictly left of
/// the left part in image coordinates (the geometry of facing the camera).
/// Ties do not count; with no visible pair the configured fallback is
/// returned.
pub fn phi_pose(person: &PersonDetection, cfg: &PriorConfig) -> f64 {
    let mut visible = 0u32;
    let mut facing = 0u32;
    for &(r, l) in &cfg.pairs {
        let right = &person.keypoints[r];
        let left = &person.keypoints[l];
        if right.score > cfg.visibility_threshold && left.score > cfg.visibility_threshold {
            visible += 1;
            if right.x < left.x {
                facing += 1;
            }
        }
    }
    if visible == 0 {
        cfg.pose_fallback
    } else {
        f64::from(facing) / f64::from(visible)
    }
}

/// Sum of `rasterize_box(det.bbox, det.bbox.c)` over a frame's detections.
pub fn confidence_mask(frame: &Frame) -> HeatMap {
    let mut mask = HeatMap::zeros(frame.dims);
    for det in &frame.detections {
        stamp_box(&mut mask, &det.bbox, det.bbox.c, |cur, v| cur + v);
    }
    mask
}

/// Average the per-frame confidence masks over a training set.
///
/// Frames are rasterized in parallel and merged in dataset order, so the
/// result is identical to a sequential per-pixel accumulation.
pub fn build_location_prior(frames: &[Frame], dims: GridDims) -> Result<LocationPriorArtifact> {
    if frames.is_empty() {
        return Err(Error::invalid(
            "location prior requires at least one frame",
        ));
    }
    for f in frames {
        if f.dims != dims {
            return Err(Error::invalid(format!(
                "frame {} dims differ from prior dims",
                f.image_id
            )));
        }
    }
    let masks = exec::map_ordered(frames, confidence_mask);
    let mut mean_mask = accumulate(&masks, dims)?;
    let n = frames.len() as f64;
    for v in mean_mask.as_mut_slice() {
        *v /= n;
    }
    Ok(LocationPriorArtifact {
        dims,
        mean_mask,
        image_count: frames.len() as u64,
    })
}

/// Location prior of one frame: its confidence mask times the dataset-mean
/// mask.
pub fn phi_loc(frame: &Frame, prior: &LocationPriorArtifact) -> Result<HeatMap> {
    if frame.dims != prior.dims {
        return Err(Error::invalid("frame dims differ from prior dims"));
    }
    elementwise_mul(&confidence_mask(frame), &prior.mean_mask)
}

/// Compose the priors into the pseudo ground-truth map for one frame.
///
/// Each detection's box is painted with its size-prior times pose-prior
/// weight and the paintings are summed; with `use_loc` the sum is
/// multiplied by the frame's location prior; the result is divided by its
/// maximum. Disabled priors are replaced by the constant 1. A prior
/// artifact is required exactly when `use_loc` is set. Frames with no
/// detections yield the all-zero map.
pub fn pseudo_gt(
    frame: &Frame,
    prior: Option<&LocationPriorArtifact>,
    cfg: &PriorConfig,
) -> Result<HeatMap> {
    cfg.validate()?;
    let mut raw = HeatMap::zeros(frame.dims);
    for det in &frame.detections {
        let size = if cfg.use_size {
            phi_size(&det.bbox, cfg.sigma)?
        } else {
            1.0
        };
        let pose = if cfg.use_pose {
            phi_pose(det, cfg)
        } else {
            1.0
        };
        stamp_box(&mut raw, &det.bbox, size * pose, |cur, v| cur + v);
    }
    if cfg.use_loc {
        let prior = prior.ok_or_else(|| {
            Error::invalid("location prior artifact required when the location prior is enabled")
        })?;
        raw = elementwise_mul(&raw, &phi_loc(frame, prior)?)?;
    }
    normalize_max(&raw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Keypoint;
    use crate::grid::rasterize_box;

    fn dims(w: usize, h: usize) -> GridDims {
        GridDims::new(w, h).unwrap()
    }

    /// Detection whose paired parts all face toward (`facing` true) or away
    /// from the wearer, with every part visible.
    fn det_facing(bbox: BBox, facing: bool) -> PersonDetection {
        let mut kps = [Keypoint::absent(); parts::COUNT];
        for &(r, l) in &DEFAULT_PAIRS {
            let (rx, lx) = if facing { (1.0, 2.0) } else { (2.0, 1.0) };
            kps[r] = Keypoint {
                x: rx,
                y: 1.0,
                score: 0.9,
            };
            kps[l] = Keypoint {
                x: lx,
                y: 1.0,
                score: 0.9,
            };
        }
        PersonDetection::new(bbox, kps).unwrap()
    }

    fn frame(id: &str, d: GridDims, detections: Vec<PersonDetection>) -> Frame {
        Frame {
            image_id: id.into(),
            dims: d,
            detections,
            image_ref: None,
        }
    }

    #[test]
    fn phi_size_closed_forms() {
        let b = |h: f64| BBox::new(0.0, 0.0, 1.0, h, 1.0).unwrap();
        assert!((phi_size(&b(10.0), 10.0).unwrap() - (-1.0f64).exp()).abs() < 1e-15);
        assert!((phi_size(&b(5.0), 10.0).unwrap() - (-2.0f64).exp()).abs() < 1e-15);
        assert!((phi_size(&b(1e9), 10.0).unwrap() - 1.0).abs() < 1e-7);
    }

    #[test]
    fn phi_size_monotonic_in_height() {
        let b = |h: f64| BBox::new(0.0, 0.0, 1.0, h, 1.0).unwrap();
        let mut prev = 0.0;
        for h in [1.0, 2.0, 5.0, 10.0, 50.0, 200.0] {
            let v = phi_size(&b(h), 10.0).unwrap();
            assert!(v > prev && v < 1.0);
            prev = v;
        }
    }

    #[test]
    fn phi_size_rejects_bad_sigma() {
        let b = BBox::new(0.0, 0.0, 1.0, 1.0, 1.0).unwrap();
        assert!(phi_size(&b, 0.0).is_err());
        assert!(phi_size(&b, -1.0).is_err());
    }

    #[test]
    fn phi_pose_all_facing_and_all_away() {
        let b = BBox::new(0.0, 0.0, 2.0, 2.0, 1.0).unwrap();
        let cfg = PriorConfig::default();
        assert_eq!(phi_pose(&det_facing(b, true), &cfg), 1.0);
        assert_eq!(phi_pose(&det_facing(b, false), &cfg), 0.0);
    }

    #[test]
    fn phi_pose_partial_visibility_ratio() {
        let b = BBox::new(0.0, 0.0, 2.0, 2.0, 1.0).unwrap();
        let cfg = PriorConfig::default();
        let mut person = det_facing(b, true);
        // Hide two pairs, flip three of the remaining six to away-facing:
        // 3 of 6 visible pairs satisfy the indicator.
        for &(r, l) in &DEFAULT_PAIRS[..2] {
            person.keypoints[r].score = 0.0;
            person.keypoints[l].score = 0.0;
        }
        for &(r, _) in &DEFAULT_PAIRS[2..5] {
            person.keypoints[r].x = 5.0;
        }
        assert_eq!(phi_pose(&person, &cfg), 0.5);
    }

    #[test]
    fn phi_pose_tie_counts_as_away() {
        let b = BBox::new(0.0, 0.0, 2.0, 2.0, 1.0).unwrap();
        let cfg = PriorConfig::default();
        let mut person = det_facing(b, true);
        for &(r, l) in &DEFAULT_PAIRS {
            person.keypoints[r].x = person.keypoints[l].x;
        }
        assert_eq!(phi_pose(&person, &cfg), 0.0);
    }

    #[test]
    fn phi_pose_no_visible_pairs_uses_fallback() {
        let b = BBox::new(0.0, 0.0, 2.0, 2.0, 1.0).unwrap();
        let cfg = PriorConfig::default();
        let mut person = det_facing(b, true);
        for kp in &mut person.keypoints {
            kp.score = 0.05;
        }
        assert_eq!(phi_pose(&person, &cfg), cfg.pose_fallback);
    }

    #[test]
    fn phi_pose_threshold_is_strict() {
        let b = BBox::new(0.0, 0.0, 2.0, 2.0, 1.0).unwrap();
        let cfg = PriorConfig::default();
        let mut person = det_facing(b, true);
        for kp in &mut person.keypoints {
            kp.score = cfg.visibility_threshold;
        }
        assert_eq!(phi_pose(&person, &cfg), cfg.pose_fallback);
    }

    #[test]
    fn config_validation_rejects_bad_pairs() {
        let mut cfg = PriorConfig::default();
        cfg.pairs.clear();
        assert!(cfg.validate().is_err());
        cfg.pairs = vec![(3, 3)];
        assert!(cfg.validate().is_err());
        cfg.pairs = vec![(2, 99)];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn location_prior_single_frame_single_box() {
        let d = dims(12, 9);
        let b = BBox::new(2.0, 2.0, 4.0, 5.0, 1.0).unwrap();
        let f = frame("a", d, vec![det_facing(b, true)]);
        let prior = build_location_prior(&[f], d).unwrap();
        assert_eq!(prior.image_count, 1);
        assert_eq!(prior.mean_mask, rasterize_box(&b, 1.0, d).unwrap());
    }

    #[test]
    fn location_prior_no_detections_is_zero() {
        let d = dims(6, 6);
        let fs = vec![frame("a", d, vec![]), frame("b", d, vec![])];
        let prior = build_location_prior(&fs, d).unwrap();
        assert_eq!(prior.mean_mask, HeatMap::zeros(d));
        assert_eq!(prior.image_count, 2);
    }

    #[test]
    fn location_prior_rejects_empty_and_mismatched() {
        let d = dims(6, 6);
        assert!(build_location_prior(&[], d).is_err());
        let f = frame("a", dims(5, 5), vec![]);
        assert!(build_location_prior(&[f], d).is_err());
    }

    #[test]
    fn location_prior_matches_per_pixel_oracle() {
        let d = dims(16, 12);
        let mut frames = Vec::new();
        for i in 0..10 {
            let x = (i % 5) as f64 * 2.5 - 1.0;
            let y = (i % 3) as f64 * 3.0 - 0.5;
            let b1 = BBox::new(x, y, 5.0, 7.0, 0.6).unwrap();
            let b2 = BBox::new(x + 3.0, y + 1.0, 4.0, 6.0, 0.9).unwrap();
            frames.push(frame(
                &format!("f{i}"),
                d,
                vec![det_facing(b1, true), det_facing(b2, false)],
            ));
        }
        let prior = build_location_prior(&frames, d).unwrap();
        for row in 0..d.height() {
            for col in 0..d.width() {
                let mut want = 0.0;
                for f in &frames {
                    for det in &f.detections {
                        if det.bbox.contains_pixel(col, row) {
                            want += det.bbox.c;
                        }
                    }
                }
                want /= frames.len() as f64;
                assert!((prior.mean_mask.get(col, row) - want).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn phi_loc_empty_frame_is_zero() {
        let d = dims(8, 8);
        let prior = LocationPriorArtifact {
            dims: d,
            mean_mask: HeatMap::from_values(d, vec![0.5; 64]).unwrap(),
            image_count: 1,
        };
        let m = phi_loc(&frame("a", d, vec![]), &prior).unwrap();
        assert_eq!(m, HeatMap::zeros(d));
    }

    #[test]
    fn phi_loc_identity_region_reproduces_mean_mask() {
        let d = dims(8, 8);
        let vals: Vec<f64> = (0..64).map(|i| (i as f64) / 64.0).collect();
        let prior = LocationPriorArtifact {
            dims: d,
            mean_mask: HeatMap::from_values(d, vals).unwrap(),
            image_count: 1,
        };
        let b = BBox::new(0.0, 0.0, 4.0, 8.0, 1.0).unwrap();
        let m = phi_loc(&frame("a", d, vec![det_facing(b, true)]), &prior).unwrap();
        for row in 0..8 {
            for col in 0..8 {
                let want = if col < 4 {
                    prior.mean_mask.get(col, row)
                } else {
                    0.0
                };
                assert_eq!(m.get(col, row), want);
            }
        }
    }

    /// Naive per-pixel reference: loops over pixels and detections straight
    /// from the composition formula.
    fn naive_pseudo_gt(
        f: &Frame,
        prior: Option<&LocationPriorArtifact>,
        cfg: &PriorConfig,
    ) -> HeatMap {
        let d = f.dims;
        let mut raw = HeatMap::zeros(d);
        for row in 0..d.height() {
            for col in 0..d.width() {
                let mut sum = 0.0;
                for det in &f.detections {
                    if det.bbox.contains_pixel(col, row) {
                        let s = if cfg.use_size {
                            phi_size(&det.bbox, cfg.sigma).unwrap()
                        } else {
                            1.0
                        };
                        let p = if cfg.use_pose { phi_pose(det, cfg) } else { 1.0 };
                        sum += s * p;
                    }
                }
                if cfg.use_loc {
                    let mut conf = 0.0;
                    for det in &f.detections {
                        if det.bbox.contains_pixel(col, row) {
                            conf += det.bbox.c;
                        }
                    }
                    sum *= conf * prior.unwrap().mean_mask.get(col, row);
                }
                raw.set(col, row, sum);
            }
        }
        let max = raw.max_value();
        if max > 0.0 {
            for v in raw.as_mut_slice() {
                *v /= max;
            }
        }
        raw
    }

    #[test]
    fn pseudo_gt_matches_naive_composition() {
        let d = dims(20, 15);
        let b1 = BBox::new(1.0, 2.0, 8.0, 10.0, 0.7).unwrap();
        let b2 = BBox::new(5.0, 1.0, 9.0, 12.0, 0.95).unwrap();
        let b3 = BBox::new(10.0, 4.0, 6.0, 8.0, 0.4).unwrap();
        let f = frame(
            "a",
            d,
            vec![
                det_facing(b1, true),
                det_facing(b2, false),
                det_facing(b3, true),
            ],
        );
        let prior = build_location_prior(std::slice::from_ref(&f), d).unwrap();
        for cfg in [
            PriorConfig::default(),
            PriorConfig {
                use_loc: false,
                ..Default::default()
            },
            PriorConfig {
                use_size: false,
                ..Default::default()
            },
            PriorConfig {
                use_pose: false,
                ..Default::default()
            },
        ] {
            let got = pseudo_gt(&f, Some(&prior), &cfg).unwrap();
            let want = naive_pseudo_gt(&f, Some(&prior), &cfg);
            for (a, b) in got.as_slice().iter().zip(want.as_slice()) {
                assert!((a - b).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn pseudo_gt_empty_frame_is_zero_map() {
        let d = dims(10, 10);
        let prior = LocationPriorArtifact {
            dims: d,
            mean_mask: HeatMap::from_values(d, vec![0.3; 100]).unwrap(),
            image_count: 1,
        };
        let m = pseudo_gt(&frame("a", d, vec![]), Some(&prior), &PriorConfig::default()).unwrap();
        assert_eq!(m, HeatMap::zeros(d));
    }

    #[test]
    fn pseudo_gt_single_detection_peaks_at_one() {
        let d = dims(12, 12);
        let b = BBox::new(2.0, 2.0, 6.0, 8.0, 0.9).unwrap();
        let f = frame("a", d, vec![det_facing(b, true)]);
        let prior = build_location_prior(std::slice::from_ref(&f), d).unwrap();
        let m = pseudo_gt(&f, Some(&prior), &PriorConfig::default()).unwrap();
        assert_eq!(m.max_value(), 1.0);
        for row in 0..12 {
            for col in 0..12 {
                let inside = b.contains_pixel(col, row);
                if inside {
                    assert!(m.get(col, row) > 0.0 && m.get(col, row) <= 1.0);
                } else {
                    assert_eq!(m.get(col, row), 0.0);
                }
            }
        }
    }

    #[test]
    fn pseudo_gt_support_within_box_union() {
        let d = dims(20, 20);
        let b1 = BBox::new(-2.0, 3.0, 7.0, 9.0, 0.8).unwrap();
        let b2 = BBox::new(11.0, 8.0, 8.0, 15.0, 0.6).unwrap();
        let f = frame("a", d, vec![det_facing(b1, true), det_facing(b2, false)]);
        let prior = build_location_prior(std::slice::from_ref(&f), d).unwrap();
        let m = pseudo_gt(&f, Some(&prior), &PriorConfig::default()).unwrap();
        for row in 0..20 {
            for col in 0..20 {
                if m.get(col, row) != 0.0 {
                    assert!(b1.contains_pixel(col, row) || b2.contains_pixel(col, row));
                }
            }
        }
    }

    #[test]
    fn pseudo_gt_all_priors_off_is_box_indicator_on_disjoint_boxes() {
        let d = dims(16, 10);
        let b1 = BBox::new(1.0, 1.0, 5.0, 7.0, 0.8).unwrap();
        let b2 = BBox::new(9.0, 2.0, 5.0, 6.0, 0.3).unwrap();
        let f = frame("a", d, vec![det_facing(b1, false), det_facing(b2, true)]);
        let cfg = PriorConfig {
            use_loc: false,
            use_size: false,
            use_pose: false,
            ..Default::default()
        };
        let m = pseudo_gt(&f, None, &cfg).unwrap();
        for row in 0..10 {
            for col in 0..16 {
                let inside = b1.contains_pixel(col, row) || b2.contains_pixel(col, row);
                assert_eq!(m.get(col, row), if inside { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn pseudo_gt_requires_prior_when_loc_enabled() {
        let d = dims(8, 8);
        let b = BBox::new(1.0, 1.0, 4.0, 4.0, 1.0).unwrap();
        let f = frame("a", d, vec![det_facing(b, true)]);
        assert!(pseudo_gt(&f, None, &PriorConfig::default()).is_err());
    }

    #[test]
    fn ablation_labels() {
        assert_eq!(PriorConfig::default().ablation_label(), "full");
        let cfg = PriorConfig {
            use_pose: false,
            ..Default::default()
        };
        assert_eq!(cfg.ablation_label(), "no-pose");
    }
}
