//! File formats, run directories and reports around `seqrisk-core`.

pub mod analysis_report;
pub mod corpus_io;
pub mod embeddings;
mod error;
pub mod explain;
pub mod model_io;
pub mod run;

pub use error::{Error, Result};
