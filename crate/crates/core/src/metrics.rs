//! Graded ordinal evaluation: over-predictions count as false positives,
//! under-predictions as false negatives.

use alloc::format;

use serde::{Deserialize, Serialize};

use crate::catalog::RiskLevel;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GradedCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl GradedCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_
    }

    pub fn record(&mut self, pred: RiskLevel, truth: RiskLevel) {
        match pred.cmp(&truth) {
            core::cmp::Ordering::Equal => self.tp += 1,
            core::cmp::Ordering::Greater => self.fp += 1,
            core::cmp::Ordering::Less => self.fn_ += 1,
        }
    }
}

impl core::ops::Add for GradedCounts {
    type Output = GradedCounts;

    fn add(self, o: GradedCounts) -> GradedCounts {
        GradedCounts { tp: self.tp + o.tp, fp: self.fp + o.fp, fn_: self.fn_ + o.fn_ }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GradedScores {
    pub gp: f64,
    pub gr: f64,
    pub fs: f64,
}

pub fn graded_counts(preds: &[RiskLevel], truths: &[RiskLevel]) -> Result<GradedCounts> {
    if preds.len() != truths.len() {
        return Err(Error::invalid(format!(
            "{} predictions for {} ground-truth labels",
            preds.len(),
            truths.len()
        )));
    }
    let mut c = GradedCounts::default();
    for (p, t) in preds.iter().zip(truths) {
        c.record(*p, *t);
    }
    Ok(c)
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// GP, GR and their harmonic mean; every 0/0 is taken as 0.
pub fn graded_scores(c: GradedCounts) -> Result<GradedScores> {
    if c.total() == 0 {
        return Err(Error::invalid("graded scores need at least one prediction"));
    }
    let gp = ratio(c.tp, c.tp + c.fp);
    let gr = ratio(c.tp, c.tp + c.fn_);
    let fs = if gp + gr == 0.0 { 0.0 } else { 2.0 * gp * gr / (gp + gr) };
    Ok(GradedScores { gp, gr, fs })
}

/// Unweighted mean of per-fold scores.
pub fn mean_scores(scores: &[GradedScores]) -> Result<GradedScores> {
    if scores.is_empty() {
        return Err(Error::invalid("no scores to average"));
    }
    let n = scores.len() as f64;
    let mut m = GradedScores::default();
    for s in scores {
        m.gp += s.gp / n;
        m.gr += s.gr / n;
        m.fs += s.fs / n;
    }
    Ok(m)
}

/// Index of the largest probability and whether the maximum was shared;
/// ties resolve to the lowest index.
pub fn argmax_level(probs: &[f64; 4]) -> (RiskLevel, bool) {
    let mut best = 0;
    let mut tied = false;
    for k in 1..4 {
        if probs[k] > probs[best] {
            best = k;
            tied = false;
        } else if probs[k] == probs[best] {
            tied = true;
        }
    }
    (RiskLevel::from_index(best).expect("index below 4"), tied)
}

#[cfg(test)]
mod tests {
    use super::*;
    use RiskLevel::*;

    #[test]
    fn mixed_example() {
        let c = graded_counts(&[Behavior, Ideation, Attempt], &[Behavior, Behavior, Ideation]).unwrap();
        assert_eq!(c, GradedCounts { tp: 1, fp: 1, fn_: 1 });
        let s = graded_scores(c).unwrap();
        assert!((s.gp - 0.5).abs() < 1e-12 && (s.gr - 0.5).abs() < 1e-12 && (s.fs - 0.5).abs() < 1e-12);
    }

    #[test]
    fn all_over_predicted() {
        let c = graded_counts(&[Attempt; 5], &[Indicator; 5]).unwrap();
        assert_eq!(c, GradedCounts { tp: 0, fp: 5, fn_: 0 });
        assert_eq!(graded_scores(c).unwrap(), GradedScores { gp: 0.0, gr: 0.0, fs: 0.0 });
    }

    #[test]
    fn perfect() {
        let c = graded_counts(&[Ideation, Attempt], &[Ideation, Attempt]).unwrap();
        assert_eq!(graded_scores(c).unwrap(), GradedScores { gp: 1.0, gr: 1.0, fs: 1.0 });
    }

    #[test]
    fn errors() {
        assert!(graded_counts(&[Ideation], &[]).is_err());
        assert!(graded_scores(GradedCounts::default()).is_err());
        assert!(mean_scores(&[]).is_err());
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax_level(&[0.1, 0.4, 0.4, 0.1]), (Ideation, true));
        assert_eq!(argmax_level(&[0.25; 4]), (Indicator, true));
        assert_eq!(argmax_level(&[0.1, 0.2, 0.3, 0.4]), (Attempt, false));
        assert_eq!(argmax_level(&[0.4, 0.4, 0.1, 0.5]), (Attempt, false));
    }
}
