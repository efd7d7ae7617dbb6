//! Case-study report for one window: per-post attention and predicted
//! factors, the alignment pair and the predicted risk distribution.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use seqrisk_core::catalog::{FactorKind, RiskLevel};
use seqrisk_core::corpus::{build_windows, UserTimeline};
use seqrisk_core::embedding::EmbeddingProvider;
use seqrisk_core::math::sigmoid;
use seqrisk_core::metrics::argmax_level;
use seqrisk_core::model::{forward_window, EncodedWindow, ModelParameters};

use crate::error::{Error, Result};
use crate::run::RunConfig;

/// Sigmoid probability above which a factor is listed as predicted.
pub const FACTOR_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostExplanation {
    pub post_id: String,
    pub timestamp: i64,
    pub delta_days: f64,
    pub attention: f64,
    pub decay_gate: f64,
    pub risk_factors: Vec<String>,
    pub protective_factors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelProbability {
    pub level: RiskLevel,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationReport {
    pub user_id: String,
    pub window_index: usize,
    pub target_post_id: String,
    pub posts: Vec<PostExplanation>,
    pub s_p: f64,
    pub s_r: f64,
    pub risk_distribution: Vec<LevelProbability>,
    pub predicted_level: RiskLevel,
    pub true_level: Option<RiskLevel>,
    pub config: RunConfig,
}

fn above_threshold(logits: &[f64], kind: FactorKind) -> Vec<String> {
    logits
        .iter()
        .zip(kind.codes())
        .filter(|(z, _)| sigmoid(**z) > FACTOR_THRESHOLD)
        .map(|(_, c)| c.to_string())
        .collect()
}

pub fn explain(
    params: &ModelParameters,
    users: &[UserTimeline],
    provider: &dyn EmbeddingProvider,
    config: &RunConfig,
    user_id: &str,
    window_index: usize,
) -> Result<ExplanationReport> {
    let user = users
        .iter()
        .find(|u| u.user_id == user_id)
        .ok_or_else(|| Error::Format(format!("unknown user \"{user_id}\"")))?;
    let windows = build_windows(user, config.model.l)?;
    let window = windows.get(window_index).ok_or_else(|| {
        Error::Format(format!(
            "user \"{user_id}\" has no window {window_index} ({} windows of length {})",
            windows.len(),
            config.model.l
        ))
    })?;
    if provider.dim() != params.dims().embed {
        return Err(Error::Format(format!(
            "embedder produces {}-dimensional vectors but the model expects {}",
            provider.dim(),
            params.dims().embed
        )));
    }
    let encoded = EncodedWindow::new(window, provider)?;
    let out = forward_window(params, &encoded, &config.model.objective_settings())?;

    let posts = window
        .observed
        .iter()
        .enumerate()
        .map(|(t, post)| PostExplanation {
            post_id: post.post_id.clone(),
            timestamp: post.timestamp,
            delta_days: window.delta_days[t],
            attention: out.encoding.attention[t],
            decay_gate: out.encoding.gates[t],
            risk_factors: above_threshold(&out.factors[t].rf_logits, FactorKind::Risk),
            protective_factors: above_threshold(&out.factors[t].pf_logits, FactorKind::Protective),
        })
        .collect();
    let (predicted_level, _) = argmax_level(&out.risk_probs);
    Ok(ExplanationReport {
        user_id: user_id.to_string(),
        window_index,
        target_post_id: window.target_post_id.clone(),
        posts,
        s_p: out.alignment.protective,
        s_r: out.alignment.risk,
        risk_distribution: RiskLevel::ALL
            .iter()
            .map(|l| LevelProbability { level: *l, probability: out.risk_probs[l.index()] })
            .collect(),
        predicted_level,
        true_level: Some(window.target_level),
        config: config.clone(),
    })
}

fn join_or_dash(codes: &[String]) -> String {
    if codes.is_empty() {
        "-".into()
    } else {
        codes.join(",")
    }
}

/// Aligned-column text rendering.
pub fn render_text(r: &ExplanationReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "user {}  window {}  target {}", r.user_id, r.window_index, r.target_post_id);
    let rows: Vec<[String; 6]> = r
        .posts
        .iter()
        .map(|p| {
            [
                p.post_id.clone(),
                p.timestamp.to_string(),
                format!("{:.2}", p.delta_days),
                format!("{:.4}", p.attention),
                join_or_dash(&p.risk_factors),
                join_or_dash(&p.protective_factors),
            ]
        })
        .collect();
    let header = ["post", "timestamp", "days", "attention", "risk factors", "protective factors"];
    let mut widths: [usize; 6] = header.map(str::len);
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let line = |cells: [&str; 6]| {
        let mut l = String::new();
        for (i, (c, w)) in cells.iter().zip(widths).enumerate() {
            if i > 0 {
                l.push_str("  ");
            }
            // numbers right-aligned, text left-aligned
            if (1..=3).contains(&i) {
                let _ = write!(l, "{c:>w$}");
            } else {
                let _ = write!(l, "{c:<w$}");
            }
        }
        l.trim_end().to_string()
    };
    let _ = writeln!(s, "{}", line(header));
    for row in &rows {
        let _ = writeln!(s, "{}", line([&row[0], &row[1], &row[2], &row[3], &row[4], &row[5]].map(|x| x.as_str())));
    }
    let _ = writeln!(s, "S_p {:.4}  S_r {:.4}", r.s_p, r.s_r);
    let dist: Vec<String> = r
        .risk_distribution
        .iter()
        .map(|p| format!("{} {:.4}", p.level.code(), p.probability))
        .collect();
    let _ = writeln!(s, "risk {}", dist.join("  "));
    let _ = write!(s, "predicted {}", r.predicted_level.code());
    if let Some(t) = r.true_level {
        let _ = write!(s, "  true {}", t.code());
    }
    s.push('\n');
    s
}
