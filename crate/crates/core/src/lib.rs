//! Quality-aware qualification of augmented multimodal training data.
//!
//! The crate forges synthetic negatives, trains a small scorer over pooled
//! modality features, maps its scores to per-sample weights, and fine-tunes
//! a surrogate sequence head with a weighted token loss. A synthetic corpus
//! generator with a corruption simulator stands in for frozen encoders and
//! diffusion augmentation.

pub mod corpus;
pub mod error;
pub mod finetune;
pub mod forge;
pub mod metrics;
pub mod numerics;
pub mod pipeline;
pub mod qa;
pub mod rng;
pub mod snapshot;

pub use error::{Error, Result};
