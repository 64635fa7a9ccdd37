//! Seeded synthetic first-person scenes with known cooperator labels.
//!
//! Each frame places `players_per_frame` detections in horizontal slots.
//! One player is the designated cooperator; with probability given by the
//! cue strengths it receives the favorable value of each cue (a tall box,
//! a camera-facing pose, a position inside the dataset hot-spot band).
//! The other players are mostly unremarkable, with small decoy slices
//! that match the cooperator on all but one cue, so disabling any single
//! prior costs measurable accuracy. A rendered grayscale image carries an
//! appearance cue: a bright facial blob on the cooperator with
//! probability `appearance_cue`, otherwise on a random other player.
//!
//! Generation is deterministic: frame `i` draws from a generator seeded
//! with `seed ^ i`, so frames can be produced in parallel and still match
//! a sequential run.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{parts, DatasetFile, Frame, GTAnnotation, Keypoint, PersonDetection};
use crate::error::{Error, Result};
use crate::exec;
use crate::grid::{stamp_box, BBox, GridDims, HeatMap};

/// Non-cooperator cue profiles as (probability, (tall, facing, hot)),
/// drawn per competitor. Each decoy slice matches the cooperator on all
/// but one cue, so exactly one prior is responsible for rejecting it.
/// The tall-facing-hot slice is kept tiny: such a player is
/// indistinguishable from the cooperator up to draw noise.
pub const DECOY_PROFILES: [(f64, (bool, bool, bool)); 4] = [
    (0.001, (true, true, true)),
    (0.08, (true, true, false)),
    (0.12, (true, false, true)),
    (0.03, (false, true, true)),
];
/// Hot-band rate for the remaining plain (short, away) competitors. Kept
/// above one half so the empirical location prior peaks inside the band
/// despite non-cooperators being the majority.
pub const PLAIN_HOT_RATE: f64 = 0.55;

/// Tall (near) box heights as a fraction of frame height.
const TALL_HEIGHT: (f64, f64) = (0.34, 0.44);
/// Short (far) box heights as a fraction of frame height.
const SHORT_HEIGHT: (f64, f64) = (0.12, 0.22);
/// Box width as a fraction of box height.
const ASPECT: (f64, f64) = (0.30, 0.45);
/// Detection confidence range. Kept narrow so confidence never outweighs
/// the size separation between tall and short boxes.
const CONFIDENCE: (f64, f64) = (0.97, 1.0);
/// Hot-spot band: box centers as a fraction of frame height. The band is
/// placed so hot and cold boxes occupy disjoint rows even at tall heights.
const HOT_CENTER: (f64, f64) = (0.66, 0.80);
/// Outside-the-band box centers as a fraction of frame height.
const COLD_CENTER: (f64, f64) = (0.12, 0.22);
/// Keypoint jitter as a fraction of box height, per coordinate.
const JITTER: f64 = 0.02;
/// Probability that a non-shoulder body part is occluded (score 0).
const OCCLUSION_RATE: f64 = 0.15;
/// Probability that the pose estimator fails outright on an away-facing
/// (back-turned) player, leaving every part at score 0. The pose prior
/// then falls back to its neutral value instead of a hard zero.
const AWAY_POSE_FAILURE_RATE: f64 = 0.8;
/// Score range of visible keypoints.
const VISIBLE_SCORE: (f64, f64) = (0.5, 1.0);
/// Grayscale levels of the rendered image.
const BACKGROUND_LEVEL: f64 = 0.2;
const BODY_LEVEL: f64 = 0.35;
const BLOB_LEVEL: f64 = 0.97;
/// Facial blob radius as a fraction of box height. Large enough to
/// survive downsampling to the scorer's internal grid on short boxes.
const BLOB_RADIUS: f64 = 0.16;
/// Facial blob center depth below the box top, as a fraction of height.
const BLOB_DEPTH: f64 = 0.12;

/// 13-point stick figure in unit box coordinates for a player facing the
/// wearer (right parts at smaller x). Away-facing players mirror u -> 1-u.
const TEMPLATE: [(usize, f64, f64); 13] = [
    (parts::NECK, 0.50, 0.15),
    (parts::R_SHOULDER, 0.30, 0.18),
    (parts::L_SHOULDER, 0.70, 0.18),
    (parts::R_ELBOW, 0.22, 0.32),
    (parts::L_ELBOW, 0.78, 0.32),
    (parts::R_WRIST, 0.18, 0.45),
    (parts::L_WRIST, 0.82, 0.45),
    (parts::R_HIP, 0.36, 0.52),
    (parts::L_HIP, 0.64, 0.52),
    (parts::R_KNEE, 0.34, 0.72),
    (parts::L_KNEE, 0.66, 0.72),
    (parts::R_ANKLE, 0.32, 0.92),
    (parts::L_ANKLE, 0.68, 0.92),
];

/// Generator settings. Cue strengths are the probabilities that the
/// cooperator draws the favorable side of each cue.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub frame_count: usize,
    pub players_per_frame: usize,
    pub dims: GridDims,
    /// Cooperator is tall (nearest/largest).
    pub cue_size: f64,
    /// Cooperator faces the wearer.
    pub cue_pose: f64,
    /// Cooperator stands in the hot-spot band.
    pub cue_loc: f64,
    /// Bright facial blob marks the cooperator in the rendered image.
    pub appearance_cue: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            frame_count: 100,
            players_per_frame: 5,
            dims: GridDims::new(160, 120).expect("static dims"),
            cue_size: 0.9,
            cue_pose: 0.9,
            cue_loc: 0.9,
            appearance_cue: 0.95,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.frame_count == 0 {
            return Err(Error::invalid("frame_count must be at least 1"));
        }
        if !(2..=10).contains(&self.players_per_frame) {
            return Err(Error::invalid("players_per_frame must be in [2,10]"));
        }
        for (name, p) in [
            ("cue_size", self.cue_size),
            ("cue_pose", self.cue_pose),
            ("cue_loc", self.cue_loc),
            ("appearance_cue", self.appearance_cue),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(format!("{name} must be in [0,1], got {p}")));
            }
        }
        // Each player needs a workable horizontal slot and the stick
        // figure needs vertical room.
        if self.dims.width() < self.players_per_frame * 14 || self.dims.height() < 40 {
            return Err(Error::invalid(format!(
                "{} players exceed the capacity of a {}x{} frame",
                self.players_per_frame,
                self.dims.width(),
                self.dims.height()
            )));
        }
        Ok(())
    }
}

/// Which cue values each player actually drew; the generator's own label
/// record, kept for verification.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameTruth {
    pub cooperator: usize,
    pub tall: Vec<bool>,
    pub facing: Vec<bool>,
    pub hot: Vec<bool>,
    /// Player carrying the bright facial blob in the rendered image.
    pub blob_on: usize,
}

/// A generated dataset: frames and annotations, the rendered grayscale
/// images (index-aligned with `dataset.frames`), and the per-frame truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub dataset: DatasetFile,
    pub images: Vec<HeatMap>,
    pub truth: Vec<FrameTruth>,
}

impl SyntheticDataset {
    /// Rendered images keyed by image id.
    pub fn images_by_id(&self) -> std::collections::HashMap<String, HeatMap> {
        self.dataset
            .frames
            .iter()
            .zip(&self.images)
            .map(|(f, img)| (f.image_id.clone(), img.clone()))
            .collect()
    }
}

fn lerp(range: (f64, f64), t: f64) -> f64 {
    range.0 + (range.1 - range.0) * t
}

/// Draw one competitor's (tall, facing, hot) cue triple from the decoy
/// table, falling through to the plain profile.
fn competitor_cues(rng: &mut ChaCha8Rng) -> (bool, bool, bool) {
    let mut roll = rng.random::<f64>();
    for &(p, cues) in &DECOY_PROFILES {
        if roll < p {
            return cues;
        }
        roll -= p;
    }
    (false, false, rng.random::<f64>() < PLAIN_HOT_RATE)
}

struct GeneratedFrame {
    frame: Frame,
    annotation: GTAnnotation,
    image: HeatMap,
    truth: FrameTruth,
}

fn generate_frame(cfg: &SynthConfig, index: usize) -> GeneratedFrame {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ index as u64);
    let n = cfg.players_per_frame;
    let (w, h) = (cfg.dims.width() as f64, cfg.dims.height() as f64);
    let slot_w = w / n as f64;

    let cooperator = rng.random_range(0..n);
    let mut slots: Vec<usize> = (0..n).collect();
    slots.shuffle(&mut rng);

    let mut detections = Vec::with_capacity(n);
    let mut truth = FrameTruth {
        cooperator,
        tall: Vec::with_capacity(n),
        facing: Vec::with_capacity(n),
        hot: Vec::with_capacity(n),
        blob_on: cooperator,
    };

    for j in 0..n {
        let (tall, facing, hot) = if j == cooperator {
            (
                rng.random::<f64>() < cfg.cue_size,
                rng.random::<f64>() < cfg.cue_pose,
                rng.random::<f64>() < cfg.cue_loc,
            )
        } else {
            competitor_cues(&mut rng)
        };

        let bh = h * lerp(if tall { TALL_HEIGHT } else { SHORT_HEIGHT }, rng.random());
        let bw = bh * lerp(ASPECT, rng.random());
        let cy = h * lerp(if hot { HOT_CENTER } else { COLD_CENTER }, rng.random());
        let slot_left = slots[j] as f64 * slot_w;
        let free = (slot_w - bw).max(0.0);
        let bx = slot_left + rng.random::<f64>() * free;
        let by = cy - bh / 2.0;
        let conf = lerp(CONFIDENCE, rng.random());
        let bbox = BBox::new(bx, by, bw, bh, conf).expect("generator ranges are valid");

        let pose_detected = facing || rng.random::<f64>() >= AWAY_POSE_FAILURE_RATE;
        let mut kps = [Keypoint::absent(); parts::COUNT];
        for &(part, u, v) in &TEMPLATE {
            let u = if facing { u } else { 1.0 - u };
            let jx = (2.0 * rng.random::<f64>() - 1.0) * JITTER * bh;
            let jy = (2.0 * rng.random::<f64>() - 1.0) * JITTER * bh;
            let is_shoulder = part == parts::R_SHOULDER || part == parts::L_SHOULDER;
            let score = if !pose_detected {
                0.0
            } else if is_shoulder || rng.random::<f64>() >= OCCLUSION_RATE {
                lerp(VISIBLE_SCORE, rng.random())
            } else {
                0.0
            };
            kps[part] = Keypoint {
                x: bx + u * bw + jx,
                y: by + v * bh + jy,
                score,
            };
        }

        detections.push(PersonDetection::new(bbox, kps).expect("generator ranges are valid"));
        truth.tall.push(tall);
        truth.facing.push(facing);
        truth.hot.push(hot);
    }

    truth.blob_on = if rng.random::<f64>() < cfg.appearance_cue {
        cooperator
    } else {
        let offset = rng.random_range(1..n);
        (cooperator + offset) % n
    };

    let mut image = HeatMap::from_values(
        cfg.dims,
        vec![BACKGROUND_LEVEL; cfg.dims.pixel_count()],
    )
    .expect("constant image");
    for det in &detections {
        stamp_box(&mut image, &det.bbox, BODY_LEVEL, |cur, v| cur.max(v));
    }
    let blob_box = &detections[truth.blob_on].bbox;
    let (bcx, bcy) = (
        blob_box.x + blob_box.w / 2.0,
        blob_box.y + BLOB_DEPTH * blob_box.h,
    );
    let radius = BLOB_RADIUS * blob_box.h;
    let blob_span = BBox::new(
        bcx - radius,
        bcy - radius,
        2.0 * radius,
        2.0 * radius,
        1.0,
    )
    .expect("positive radius");
    let (cols, rows) = blob_span.pixel_span(cfg.dims);
    for row in rows {
        let py = row as f64 + 0.5;
        for col in cols.clone() {
            let px = col as f64 + 0.5;
            if (px - bcx).powi(2) + (py - bcy).powi(2) <= radius * radius {
                image.set(col, row, BLOB_LEVEL);
            }
        }
    }

    let image_id = format!("frame-{index:05}");
    let bbox = detections[cooperator].bbox;
    GeneratedFrame {
        frame: Frame {
            image_id: image_id.clone(),
            dims: cfg.dims,
            detections,
            image_ref: None,
        },
        annotation: GTAnnotation {
            image_id,
            cooperator_box: BBox::new(bbox.x, bbox.y, bbox.w, bbox.h, 1.0)
                .expect("generator ranges are valid"),
        },
        image,
        truth,
    }
}

/// Generate a labeled dataset: every frame has `players_per_frame`
/// detections and exactly one cooperator annotation.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<SyntheticDataset> {
    cfg.validate()?;
    let generated = exec::map_indices(cfg.frame_count, |i| generate_frame(cfg, i));
    let mut dataset = DatasetFile::new(cfg.dims);
    let mut images = Vec::with_capacity(cfg.frame_count);
    let mut truth = Vec::with_capacity(cfg.frame_count);
    for g in generated {
        dataset.frames.push(g.frame);
        dataset.annotations.push(g.annotation);
        images.push(g.image);
        truth.push(g.truth);
    }
    dataset.validate()?;
    Ok(SyntheticDataset {
        dataset,
        images,
        truth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::priors::{phi_pose, PriorConfig};

    #[test]
    fn same_config_is_identical() {
        let cfg = SynthConfig {
            frame_count: 20,
            ..Default::default()
        };
        let a = generate_synthetic(&cfg).unwrap();
        let b = generate_synthetic(&cfg).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(&SynthConfig {
            seed: 1,
            ..cfg
        })
        .unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn every_frame_has_players_and_one_annotation() {
        let cfg = SynthConfig {
            frame_count: 30,
            ..Default::default()
        };
        let out = generate_synthetic(&cfg).unwrap();
        assert_eq!(out.dataset.frames.len(), 30);
        assert_eq!(out.dataset.annotations.len(), 30);
        assert_eq!(out.images.len(), 30);
        for (frame, ann) in out.dataset.frames.iter().zip(&out.dataset.annotations) {
            assert_eq!(frame.detections.len(), cfg.players_per_frame);
            assert_eq!(frame.image_id, ann.image_id);
        }
        out.dataset.validate().unwrap();
    }

    #[test]
    fn facing_players_have_high_pose_prior() {
        let cfg = SynthConfig {
            frame_count: 50,
            ..Default::default()
        };
        let out = generate_synthetic(&cfg).unwrap();
        let pcfg = PriorConfig::default();
        let mut saw_away_failure = false;
        for (frame, truth) in out.dataset.frames.iter().zip(&out.truth) {
            for (det, &facing) in frame.detections.iter().zip(&truth.facing) {
                let p = phi_pose(det, &pcfg);
                if facing {
                    assert!(p >= 0.75, "facing player scored {p}");
                } else if det.keypoints.iter().all(|k| k.score == 0.0) {
                    // Failed pose detection: neutral fallback.
                    assert_eq!(p, pcfg.pose_fallback);
                    saw_away_failure = true;
                } else {
                    assert!(p <= 0.25, "away player scored {p}");
                }
            }
        }
        assert!(saw_away_failure);
    }

    #[test]
    fn blob_frequency_matches_appearance_cue() {
        let cfg = SynthConfig {
            frame_count: 1000,
            ..Default::default()
        };
        let out = generate_synthetic(&cfg).unwrap();
        let on_coop = out
            .truth
            .iter()
            .filter(|t| t.blob_on == t.cooperator)
            .count() as f64
            / 1000.0;
        assert!((0.90..=0.99).contains(&on_coop), "blob rate {on_coop}");
    }

    #[test]
    fn image_levels_are_in_range() {
        let cfg = SynthConfig {
            frame_count: 3,
            ..Default::default()
        };
        let out = generate_synthetic(&cfg).unwrap();
        for img in &out.images {
            assert!(img
                .as_slice()
                .iter()
                .all(|&v| (0.0..=1.0).contains(&v)));
            assert!(img.as_slice().iter().any(|&v| v == BLOB_LEVEL));
        }
    }

    #[test]
    fn infeasible_config_is_rejected() {
        let cfg = SynthConfig {
            players_per_frame: 10,
            dims: GridDims::new(64, 48).unwrap(),
            ..Default::default()
        };
        assert!(generate_synthetic(&cfg).is_err());
        let cfg = SynthConfig {
            players_per_frame: 1,
            ..Default::default()
        };
        assert!(generate_synthetic(&cfg).is_err());
    }
}
