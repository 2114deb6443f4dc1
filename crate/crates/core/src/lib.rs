//! Slide-level cancer subtype classification from bags of patch embeddings.
//!
//! A whole-slide image is represented as a *bag*: an `N x d` matrix of
//! instance embeddings produced by an external, frozen feature extractor.
//! This crate trains and evaluates slide-level classifiers on top of such
//! bags without ever touching the pixel data that produced them (except in
//! [`preprocess`], which computes the tile coordinates an external embedding
//! producer consumes).
//!
//! Modules:
//! - [`data`]: manifests, the bag file format, stratified splits, and a
//!   synthetic bag generator for testing.
//! - [`nn`]: a small dense compute tape (forward + reverse pass), the
//!   classification loss, AdamW, and the cosine learning-rate schedule.
//! - [`aggregators`]: the four bag-to-prediction strategies (BGAP, gated
//!   attention, a light transformer, and nearest-prototype matching).
//! - [`train_eval`]: per-fold training, balanced-accuracy evaluation, and
//!   the cross-validation driver.
//! - [`tsne`]: exact t-SNE over slide-level embeddings with TSV export.
//! - [`preprocess`]: tile grids, Otsu foreground segmentation, and
//!   background-fraction patch filtering.

pub mod aggregators;
pub mod data;
pub mod error;
pub mod nn;
pub mod preprocess;
pub mod train_eval;
pub mod tsne;

pub use error::{Error, Result};

/// Engine version echoed into every serialized report.
pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");
