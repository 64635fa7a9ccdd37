//! Cooperative-intent prediction from egocentric person detections.
//!
//! The pipeline turns frozen pose-detector output (person boxes plus 18-point
//! keypoint sets) into dense pseudo ground-truth via three egocentric priors
//! (location, size, facing direction), trains a small convolutional scorer
//! against those labels, and evaluates who-is-cooperating predictions by
//! argmax over per-person scores.

pub mod dataset;
pub mod error;
pub mod eval;
pub mod exec;
pub mod features;
pub mod grid;
pub mod io;
pub mod learner;
pub mod pipeline;
pub mod priors;
pub mod synth;

pub use error::{Error, Result};
