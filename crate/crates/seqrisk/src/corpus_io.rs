//! Newline-delimited JSON corpus files and the synthetic ground-truth sidecar.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use seqrisk_core::catalog::{FactorKind, FactorSet, RiskLevel};
use seqrisk_core::corpus::{Post, UserTimeline};
use seqrisk_core::synthetic::{TransitionCause, TransitionRecord};

use crate::error::{Error, Result};

/// One post as stored on disk. Every field is required and no others are
/// accepted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PostRecord {
    pub user_id: String,
    pub post_id: String,
    pub timestamp: i64,
    pub text: String,
    pub risk_level: String,
    pub risk_factors: Vec<String>,
    pub protective_factors: Vec<String>,
}

impl PostRecord {
    pub fn from_post(p: &Post) -> Self {
        PostRecord {
            user_id: p.user_id.clone(),
            post_id: p.post_id.clone(),
            timestamp: p.timestamp,
            text: p.text.clone(),
            risk_level: p.risk_level.code().to_string(),
            risk_factors: p.risk_factors.codes(FactorKind::Risk).into_iter().map(String::from).collect(),
            protective_factors: p
                .protective_factors
                .codes(FactorKind::Protective)
                .into_iter()
                .map(String::from)
                .collect(),
        }
    }

    pub fn into_post(self) -> seqrisk_core::Result<Post> {
        let post = Post {
            risk_level: RiskLevel::from_code(&self.risk_level)?,
            risk_factors: FactorSet::parse(FactorKind::Risk, &self.risk_factors)?,
            protective_factors: FactorSet::parse(FactorKind::Protective, &self.protective_factors)?,
            user_id: self.user_id,
            post_id: self.post_id,
            timestamp: self.timestamp,
            text: self.text,
        };
        post.validate()?;
        Ok(post)
    }
}

fn read_lines(path: &Path) -> Result<impl Iterator<Item = (usize, std::io::Result<String>)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(BufReader::new(file).lines().enumerate().map(|(i, l)| (i + 1, l)))
}

/// Read a corpus file into per-user timelines (ordered by user id).
/// Blank lines are skipped.
pub fn load_corpus(path: &Path) -> Result<Vec<UserTimeline>> {
    let mut posts = Vec::new();
    for (line_no, line) in read_lines(path)? {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: PostRecord = serde_json::from_str(&line).map_err(|e| Error::parse(path, line_no, e))?;
        let post = record.into_post().map_err(|e| Error::parse(path, line_no, e))?;
        posts.push(post);
    }
    Ok(UserTimeline::group(posts)?)
}

pub fn write_corpus<W: Write>(mut out: W, users: &[UserTimeline]) -> Result<()> {
    for user in users {
        for post in &user.posts {
            serde_json::to_writer(&mut out, &PostRecord::from_post(post))?;
            out.write_all(b"\n").map_err(|e| Error::io("<corpus>", e))?;
        }
    }
    Ok(())
}

pub fn save_corpus(path: &Path, users: &[UserTimeline]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_corpus(&mut w, users)?;
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthRecord {
    pub user_id: String,
    /// The post whose level the transition produced.
    pub post_id: String,
    /// "protective-effective", "risk-effective" or "none".
    pub cause: String,
}

/// Default sidecar location: `<corpus>.truth.jsonl`.
pub fn truth_path(corpus: &Path) -> std::path::PathBuf {
    let mut name = corpus.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".truth.jsonl");
    corpus.with_file_name(name)
}

pub fn save_ground_truth(path: &Path, transitions: &[TransitionRecord]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for t in transitions {
        let rec = TruthRecord { user_id: t.user_id.clone(), post_id: t.post_id.clone(), cause: t.cause.label().into() };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_ground_truth(path: &Path) -> Result<Vec<TransitionRecord>> {
    let mut out = Vec::new();
    for (line_no, line) in read_lines(path)? {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TruthRecord = serde_json::from_str(&line).map_err(|e| Error::parse(path, line_no, e))?;
        let cause = TransitionCause::from_label(&rec.cause).map_err(|e| Error::parse(path, line_no, e))?;
        out.push(TransitionRecord { user_id: rec.user_id, post_id: rec.post_id, cause });
    }
    Ok(out)
}
