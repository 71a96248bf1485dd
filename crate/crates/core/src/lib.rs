//! Context-aware object detection at desk scale.
//!
//! Two context models over synthetic convolutional feature maps: a
//! person-centric Gaussian heatmap prior over accessory locations, and a
//! local-scene-context model that scores proposals against automatically
//! selected context regions through a codebook of binary spatial relations.
//! Everything trainable is a small dense network over ROI-pooled features,
//! gradient-checked against central finite differences. A synthetic scene
//! generator with a tunable appearance-ambiguity knob makes the context
//! benefit measurable, and a COCO-style AP/diagnosis harness measures it.

pub mod config;
pub mod dataset;
pub mod detector;
pub mod error;
pub mod eval;
pub mod featmap;
pub mod geometry;
pub mod nn;
pub mod person;
pub mod pipeline;
pub mod rng;
pub mod scene;
pub mod synth;

pub use error::{Error, Result};
