//! smearscope-core: thin blood-smear microscopy analysis.
//!
//! The pipeline stages are:
//!
//! 1. **Preprocess**: remove the dark vignette around eyepiece photographs.
//! 2. **Segmentation**: tiled Otsu binarization, morphological cleanup and
//!    marker-controlled watershed, producing one box per cell.
//! 3. **Classification**: handcrafted features and softmax classifiers,
//!    composed as a single-stage or two-stage (cascade) stage classifier.
//! 4. **Evaluation**: IoU matching, confusion matrices, macro metrics and
//!    dataset splitting.
//!
//! [`dataset`] provides the annotation manifest and a seeded synthetic smear
//! generator; [`analysis`] ties everything together per image.

#![allow(clippy::needless_range_loop)]

pub mod analysis;
pub mod classification;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod imaging;
pub mod preprocess;
pub mod rng;
pub mod segmentation;

pub use error::{Error, Result};
pub use geometry::BoundingBox;
