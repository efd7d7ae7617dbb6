//! Post embedding providers.
//!
//! [`HashFeaturizer`] is a seeded signed feature-hashing bag of words;
//! [`PrecomputedEmbeddings`] serves vectors produced offline by an external
//! sentence encoder, keyed by post id.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::{math, Error, Result};

pub const DEFAULT_HASH_DIM: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector(pub Vec<f64>);

impl EmbeddingVector {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

pub trait EmbeddingProvider {
    fn dim(&self) -> usize;

    /// Must be deterministic. Text-based providers ignore `post_id`.
    fn embed(&self, post_id: &str, text: &str) -> Result<EmbeddingVector>;
}

/// 64-bit FNV-1a over the token bytes, seeded, with a splitmix finalizer.
fn token_hash(token: &str, seed: u64) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for b in token.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h ^= h >> 30;
    h = h.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h ^= h >> 27;
    h = h.wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}

/// Lowercased alphanumeric tokens.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
}

/// Signed hashing trick, L2-normalized when nonzero.
pub fn hash_featurize(text: &str, dim: usize, seed: u64) -> EmbeddingVector {
    let mut v = alloc::vec![0.0; dim];
    for tok in tokenize(text) {
        let h = token_hash(&tok, seed);
        let idx = (h % dim as u64) as usize;
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        v[idx] += sign;
    }
    let n = math::norm(&v);
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    EmbeddingVector(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashFeaturizer {
    dim: usize,
    seed: u64,
}

impl HashFeaturizer {
    pub fn new(dim: usize, seed: u64) -> Result<Self> {
        if dim < 8 {
            return Err(Error::invalid(format!("hash dimension must be >= 8, got {dim}")));
        }
        Ok(HashFeaturizer { dim, seed })
    }
}

impl EmbeddingProvider for HashFeaturizer {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, _post_id: &str, text: &str) -> Result<EmbeddingVector> {
        Ok(hash_featurize(text, self.dim, self.seed))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrecomputedEmbeddings {
    dim: usize,
    vectors: BTreeMap<String, Vec<f64>>,
}

impl PrecomputedEmbeddings {
    /// All rows must share one dimension and contain only finite values.
    pub fn from_rows<I>(rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, Vec<f64>)>,
    {
        let mut dim = None;
        let mut vectors = BTreeMap::new();
        for (id, v) in rows {
            if v.is_empty() {
                return Err(Error::Format(format!("post {id} has an empty vector")));
            }
            match dim {
                None => dim = Some(v.len()),
                Some(d) if d != v.len() => {
                    return Err(Error::Format(format!(
                        "post {id} has dimension {}, expected {d}",
                        v.len()
                    )))
                }
                _ => {}
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Format(format!("post {id} has a non-finite entry")));
            }
            if vectors.insert(id.clone(), v).is_some() {
                return Err(Error::Format(format!("post {id} listed twice")));
            }
        }
        let dim = dim.ok_or_else(|| Error::Format("no embedding rows".into()))?;
        Ok(PrecomputedEmbeddings { dim, vectors })
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Fails with a lookup error naming the first id without a vector.
    pub fn check_coverage<'a, I: IntoIterator<Item = &'a str>>(&self, ids: I) -> Result<()> {
        for id in ids {
            if !self.vectors.contains_key(id) {
                return Err(Error::Lookup(format!("no embedding for post \"{id}\"")));
            }
        }
        Ok(())
    }
}

impl EmbeddingProvider for PrecomputedEmbeddings {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, post_id: &str, _text: &str) -> Result<EmbeddingVector> {
        self.vectors
            .get(post_id)
            .map(|v| EmbeddingVector(v.clone()))
            .ok_or_else(|| Error::Lookup(format!("no embedding for post \"{post_id}\"")))
    }
}
