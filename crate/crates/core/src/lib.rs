//! Multimodal temporal-fusion pipeline for two affect tasks: sequence-level
//! emotion-intensity regression (EMI) and frame-level ambivalence/hesitancy
//! classification (BAH).
//!
//! The crate works over *feature packs* — directories of precomputed,
//! per-modality feature matrices plus word-timed transcripts and labels —
//! and provides:
//!
//! - [`datamodel`]: domain types and structural validation
//! - [`featurestore`]: the on-disk pack format and a deterministic
//!   planted-signal synthetic generator
//! - [`windowing`]: fixed-length truncation for EMI and the centered,
//!   per-modality context windows driving BAH sequence-to-point prediction
//! - [`encoders`]: text-embedder and feature-source adapter contracts plus
//!   deterministic stubs
//! - [`model`]: two-layer masked LSTM temporal heads, a Tanh fusion MLP,
//!   task heads, and exact hand-derived gradients
//! - [`mtl`]: uncertainty-weighted multi-task loss and convex prediction
//!   fusion
//! - [`training`]: Adam training loops with cosine decay, early stopping,
//!   and deterministic checkpointing
//! - [`metrics`]: mean per-emotion Pearson correlation, support-weighted
//!   frame-level F1, and binary prediction-track smoothing

pub mod datamodel;
pub mod encoders;
pub mod error;
pub mod featurestore;
pub mod metrics;
pub mod model;
pub mod mtl;
pub mod training;
pub mod windowing;

pub use error::{CoreError, Result};
