//! Offensive-language identification for code-mixed (Tamil-English) social
//! media text, built from scratch at desk scale.
//!
//! The pipeline: clean raw comments, build a WordPiece-style subword
//! vocabulary, encode padded token batches, run a small transformer encoder
//! with either an attention-pooling or mean-pooling classification head, and
//! train with AdamW under a linear learning-rate schedule. Evaluation reports
//! support-weighted precision/recall/F1, the ranking metric used by shared
//! tasks on this kind of data.
//!
//! Everything numeric is 64-bit and deterministic for a fixed seed: the same
//! config and seed reproduce the same loss history bit for bit. All
//! randomness (sampling, shuffling, dropout, init) flows through a single
//! SplitMix64 generator so runs reproduce across platforms.
//!
//! The `codemix` binary wires the library into `prepare`, `train`, `eval`,
//! and `predict` subcommands; see the crate README for usage.

// Numeric kernels index rows and columns on purpose; iterator rewrites of
// those loops read worse.
#![allow(clippy::needless_range_loop)]

pub mod cli;
pub mod dataset;
pub mod error;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod rng;
pub mod textprep;
pub mod training;

pub use error::{Error, Result};
pub use model::{Model, ModelConfig, PoolerKind};
pub use training::{Checkpoint, TrainConfig};
