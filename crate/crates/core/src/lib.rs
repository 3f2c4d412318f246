//! Dense correspondence matching and geometric verification for image
//! retrieval re-ranking.

pub mod cli;
pub mod cmap;
pub mod error;
pub mod features;
pub mod formats;
pub mod image;
pub mod matcher;
pub mod metrics;
pub mod pyramid;
pub mod rerank;
pub mod rng;
pub mod sample;
pub mod synth;
pub mod verify;

pub use cmap::{CorrespondenceMap, Mask};
pub use error::{Error, Result};
pub use features::{FeatureMap, GlobalDescriptor};
pub use image::Image;
