//! Shared helpers for the integration suites: a seeded random frame
//! generator and a naive per-pixel reference implementation of the
//! pseudo ground-truth composition, written independently of the library
//! internals (plain nested loops, no shared rasterization code).

#![allow(dead_code)]

use egointent::dataset::{parts, DatasetFile, Frame, GTAnnotation, Keypoint, PersonDetection};
use egointent::grid::{BBox, GridDims, HeatMap};
use egointent::priors::LocationPriorArtifact;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn dims(w: usize, h: usize) -> GridDims {
    GridDims::new(w, h).unwrap()
}

/// A random detection: box loosely inside (possibly straddling) the grid,
/// random confidence, and random keypoints with mixed visibility.
pub fn random_detection(rng: &mut ChaCha8Rng, d: GridDims) -> PersonDetection {
    let (w, h) = (d.width() as f64, d.height() as f64);
    let bw = 2.0 + rng.random::<f64>() * (w * 0.45);
    let bh = 2.0 + rng.random::<f64>() * (h * 0.6);
    let bx = -bw * 0.5 + rng.random::<f64>() * w;
    let by = -bh * 0.5 + rng.random::<f64>() * h;
    let conf = 0.05 + 0.95 * rng.random::<f64>();
    let bbox = BBox::new(bx, by, bw, bh, conf).unwrap();
    let mut kps = [Keypoint::absent(); parts::COUNT];
    for kp in &mut kps {
        *kp = Keypoint {
            x: bx + rng.random::<f64>() * bw,
            y: by + rng.random::<f64>() * bh,
            score: rng.random::<f64>(),
        };
    }
    PersonDetection::new(bbox, kps).unwrap()
}

/// A random frame with `2..=8` detections.
pub fn random_frame(rng: &mut ChaCha8Rng, d: GridDims, id: &str) -> Frame {
    let detections = (0..rng.random_range(2..=8))
        .map(|_| random_detection(rng, d))
        .collect();
    Frame {
        image_id: id.to_string(),
        dims: d,
        detections,
        image_ref: None,
    }
}

/// A random well-formed dataset with an annotation on a subset of frames.
pub fn random_dataset(rng: &mut ChaCha8Rng, d: GridDims, frames: usize) -> DatasetFile {
    let mut ds = DatasetFile::new(d);
    for i in 0..frames {
        let id = format!("img-{i:04}");
        let frame = random_frame(rng, d, &id);
        if rng.random::<f64>() < 0.8 {
            let pick = rng.random_range(0..frame.detections.len());
            let b = frame.detections[pick].bbox;
            ds.annotations.push(GTAnnotation {
                image_id: id.clone(),
                cooperator_box: BBox::new(b.x, b.y, b.w, b.h, 1.0).unwrap(),
            });
        }
        ds.frames.push(frame);
    }
    ds.validate().unwrap();
    ds
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Reference size prior.
pub fn naive_phi_size(bbox: &BBox, sigma: f64) -> f64 {
    (-sigma / bbox.h).exp()
}

/// Reference pose prior: fraction of left/right pairs, both parts scoring
/// strictly above the threshold, whose right part lies strictly left of
/// the left part. Neutral 0.5 if no pair is visible.
pub fn naive_phi_pose(det: &PersonDetection) -> f64 {
    const PAIRS: [(usize, usize); 8] = [
        (parts::R_EYE, parts::L_EYE),
        (parts::R_EAR, parts::L_EAR),
        (parts::R_SHOULDER, parts::L_SHOULDER),
        (parts::R_ELBOW, parts::L_ELBOW),
        (parts::R_WRIST, parts::L_WRIST),
        (parts::R_HIP, parts::L_HIP),
        (parts::R_KNEE, parts::L_KNEE),
        (parts::R_ANKLE, parts::L_ANKLE),
    ];
    let mut visible = 0.0;
    let mut facing = 0.0;
    for (r, l) in PAIRS {
        let (rk, lk) = (&det.keypoints[r], &det.keypoints[l]);
        if rk.score > 0.1 && lk.score > 0.1 {
            visible += 1.0;
            if rk.x < lk.x {
                facing += 1.0;
            }
        }
    }
    if visible == 0.0 {
        0.5
    } else {
        facing / visible
    }
}

/// Whether the pixel centered at (col + 0.5, row + 0.5) lies inside the box.
pub fn pixel_inside(b: &BBox, col: usize, row: usize) -> bool {
    let px = col as f64 + 0.5;
    let py = row as f64 + 0.5;
    px >= b.x && px < b.x + b.w && py >= b.y && py < b.y + b.h
}

/// Reference pseudo ground truth, straight from the composition formula:
/// per pixel, sum each covering detection's size*pose weight, multiply by
/// the frame confidence mask times the dataset-mean mask when the
/// location prior is enabled, then divide by the map maximum.
pub fn naive_pseudo_gt(
    frame: &Frame,
    prior: Option<&LocationPriorArtifact>,
    sigma: f64,
    use_loc: bool,
    use_size: bool,
    use_pose: bool,
) -> Vec<f64> {
    let d = frame.dims;
    let mut raw = vec![0.0; d.pixel_count()];
    for row in 0..d.height() {
        for col in 0..d.width() {
            let mut sum = 0.0;
            for det in &frame.detections {
                if pixel_inside(&det.bbox, col, row) {
                    let s = if use_size {
                        naive_phi_size(&det.bbox, sigma)
                    } else {
                        1.0
                    };
                    let p = if use_pose { naive_phi_pose(det) } else { 1.0 };
                    sum += s * p;
                }
            }
            if use_loc {
                let mut conf = 0.0;
                for det in &frame.detections {
                    if pixel_inside(&det.bbox, col, row) {
                        conf += det.bbox.c;
                    }
                }
                sum *= conf * prior.unwrap().mean_mask.get(col, row);
            }
            raw[row * d.width() + col] = sum;
        }
    }
    let max = raw.iter().cloned().fold(0.0f64, f64::max);
    if max > 0.0 {
        for v in &mut raw {
            *v /= max;
        }
    }
    raw
}

/// Reference dataset-mean confidence mask.
pub fn naive_mean_mask(frames: &[Frame], d: GridDims) -> HeatMap {
    let mut mean = HeatMap::zeros(d);
    for row in 0..d.height() {
        for col in 0..d.width() {
            let mut total = 0.0;
            for f in frames {
                for det in &f.detections {
                    if pixel_inside(&det.bbox, col, row) {
                        total += det.bbox.c;
                    }
                }
            }
            mean.set(col, row, total / frames.len() as f64);
        }
    }
    mean
}
