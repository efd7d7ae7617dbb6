//! Embedding provider selection and the precomputed-vector file format
//! (`post_id v1 v2 ...`, one post per line).

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use seqrisk_core::corpus::UserTimeline;
use seqrisk_core::embedding::{EmbeddingProvider, HashFeaturizer, PrecomputedEmbeddings, DEFAULT_HASH_DIM};

use crate::error::{Error, Result};

/// `hash` (seeded feature hashing) or `file:<path>` (precomputed vectors).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EmbedderSpec {
    Hash,
    File(PathBuf),
}

impl FromStr for EmbedderSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "hash" {
            Ok(EmbedderSpec::Hash)
        } else if let Some(p) = s.strip_prefix("file:") {
            if p.is_empty() {
                Err("file: embedder needs a path".into())
            } else {
                Ok(EmbedderSpec::File(PathBuf::from(p)))
            }
        } else {
            Err(format!("unknown embedder \"{s}\" (expected hash or file:<path>)"))
        }
    }
}

impl fmt::Display for EmbedderSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EmbedderSpec::Hash => f.write_str("hash"),
            EmbedderSpec::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

impl Serialize for EmbedderSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for EmbedderSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

fn default_dim() -> usize {
    DEFAULT_HASH_DIM
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbedderConfig {
    pub embedder: EmbedderSpec,
    /// Hash featurizer width; ignored for precomputed vectors.
    #[serde(default = "default_dim")]
    pub hash_dim: usize,
    #[serde(default)]
    pub hash_seed: u64,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        EmbedderConfig { embedder: EmbedderSpec::Hash, hash_dim: DEFAULT_HASH_DIM, hash_seed: 0 }
    }
}

impl EmbedderConfig {
    /// Build the provider; precomputed vectors must cover every post of `users`.
    pub fn provider(&self, users: &[UserTimeline]) -> Result<Box<dyn EmbeddingProvider>> {
        match &self.embedder {
            EmbedderSpec::Hash => Ok(Box::new(HashFeaturizer::new(self.hash_dim, self.hash_seed)?)),
            EmbedderSpec::File(path) => {
                let p = load_precomputed(path)?;
                p.check_coverage(users.iter().flat_map(|u| u.posts.iter().map(|p| p.post_id.as_str())))?;
                Ok(Box::new(p))
            }
        }
    }
}

pub fn load_precomputed(path: &Path) -> Result<PrecomputedEmbeddings> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let mut fields = line.split_whitespace();
        let Some(id) = fields.next() else { continue };
        let values = fields
            .map(|f| f.parse::<f64>().map_err(|e| Error::parse(path, i + 1, format!("bad value \"{f}\": {e}"))))
            .collect::<Result<Vec<f64>>>()?;
        rows.push((id.to_string(), values));
    }
    Ok(PrecomputedEmbeddings::from_rows(rows)?)
}
