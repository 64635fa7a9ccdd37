//! In-memory data model: keypoints, person detections, frames, annotations,
//! and the dataset container shared by every pipeline stage.

use crate::error::{Error, Result};
use crate::grid::{BBox, GridDims};

/// Part indices of the 18-keypoint skeleton convention used by the pose
/// detector whose outputs this pipeline ingests.
pub mod parts {
    pub const NOSE: usize = 0;
    pub const NECK: usize = 1;
    pub const R_SHOULDER: usize = 2;
    pub const R_ELBOW: usize = 3;
    pub const R_WRIST: usize = 4;
    pub const L_SHOULDER: usize = 5;
    pub const L_ELBOW: usize = 6;
    pub const L_WRIST: usize = 7;
    pub const R_HIP: usize = 8;
    pub const R_KNEE: usize = 9;
    pub const R_ANKLE: usize = 10;
    pub const L_HIP: usize = 11;
    pub const L_KNEE: usize = 12;
    pub const L_ANKLE: usize = 13;
    pub const R_EYE: usize = 14;
    pub const L_EYE: usize = 15;
    pub const R_EAR: usize = 16;
    pub const L_EAR: usize = 17;
    pub const COUNT: usize = 18;
}

/// One detected body part. The part id is the keypoint's index within its
/// person's array; absent parts carry score 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub score: f64,
}

impl Keypoint {
    /// Placeholder for a part the detector did not find.
    pub fn absent() -> Self {
        Keypoint {
            x: 0.0,
            y: 0.0,
            score: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.x.is_finite() || !self.y.is_finite() {
            return Err(Error::invalid("keypoint coordinates must be finite"));
        }
        if !(0.0..=1.0).contains(&self.score) {
            return Err(Error::invalid(format!(
                "keypoint score must be in [0,1], got {}",
                self.score
            )));
        }
        Ok(())
    }
}

/// One detected player: bounding box plus a complete 18-part keypoint set
/// indexed by part id.
#[derive(Debug, Clone, PartialEq)]
pub struct PersonDetection {
    pub bbox: BBox,
    pub keypoints: [Keypoint; parts::COUNT],
}

impl PersonDetection {
    pub fn new(bbox: BBox, keypoints: [Keypoint; parts::COUNT]) -> Result<Self> {
        let d = PersonDetection { bbox, keypoints };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        self.bbox.validate()?;
        for kp in &self.keypoints {
            kp.validate()?;
        }
        Ok(())
    }
}

/// One first-person image: its detections and an optional path to the
/// rendered source image.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub image_id: String,
    pub dims: GridDims,
    pub detections: Vec<PersonDetection>,
    pub image_ref: Option<String>,
}

impl Frame {
    pub fn validate(&self) -> Result<()> {
        if self.image_id.is_empty() {
            return Err(Error::invalid("frame image_id must be nonempty"));
        }
        for det in &self.detections {
            det.validate()?;
        }
        Ok(())
    }
}

/// Ground-truth cooperator label for one image. The box confidence field
/// is unused and fixed at 1.
#[derive(Debug, Clone, PartialEq)]
pub struct GTAnnotation {
    pub image_id: String,
    pub cooperator_box: BBox,
}

/// A full dataset: frames plus optional cooperator annotations, all sharing
/// one grid size.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetFile {
    pub format_version: u32,
    pub dims: GridDims,
    pub frames: Vec<Frame>,
    pub annotations: Vec<GTAnnotation>,
}

/// Version written by this build and the only one it reads.
pub const DATASET_FORMAT_VERSION: u32 = 1;

impl DatasetFile {
    pub fn new(dims: GridDims) -> Self {
        DatasetFile {
            format_version: DATASET_FORMAT_VERSION,
            dims,
            frames: Vec::new(),
            annotations: Vec::new(),
        }
    }

    pub fn frame(&self, image_id: &str) -> Option<&Frame> {
        self.frames.iter().find(|f| f.image_id == image_id)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for f in &self.frames {
            f.validate()?;
            if f.dims != self.dims {
                return Err(Error::invalid(format!(
                    "frame {} dims differ from dataset dims",
                    f.image_id
                )));
            }
            if !seen.insert(f.image_id.as_str()) {
                return Err(Error::invalid(format!(
                    "duplicate image_id {}",
                    f.image_id
                )));
            }
        }
        for ann in &self.annotations {
            ann.cooperator_box.validate()?;
            if !seen.contains(ann.image_id.as_str()) {
                return Err(Error::invalid(format!(
                    "annotation references unknown image_id {}",
                    ann.image_id
                )));
            }
        }
        Ok(())
    }
}
