//! Allocation-only core of the seqrisk toolkit.
//!
//! Everything in this crate is a pure function of its inputs and an explicit
//! seed: post windowing and user-disjoint folds, a synthetic corpus generator,
//! annotation analytics, the temporal-decay BiLSTM encoder, the multi-task
//! decoder with hand-derived gradients, graded ordinal metrics, and the
//! training / cross-validation driver. File formats and the command line live
//! in the `seqrisk` crate.
#![no_std]

extern crate alloc;

pub mod analysis;
pub mod catalog;
pub mod corpus;
pub mod decoder;
pub mod embedding;
pub mod encoder;
mod error;
pub mod linalg;
pub mod math;
pub mod metrics;
pub mod model;
pub mod synthetic;
pub mod trainer;

pub use catalog::{FactorCatalog, FactorKind, FactorSet, RiskLevel};
pub use corpus::{build_windows, split_users, FoldAssignment, LabeledWindow, Post, UserTimeline};
pub use error::{Error, Result};
pub use model::{ModelDims, ModelParameters};
pub use trainer::TrainConfig;
