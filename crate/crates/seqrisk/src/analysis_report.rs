//! The `analyze` report: annotator agreement, per-factor chi-square table
//! and the risk/protective co-occurrence matrix.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use seqrisk_core::analysis::{cooccurrence, factor_discrimination, fleiss_kappa, RatingMatrix};
use seqrisk_core::catalog::{PROTECTIVE_FACTOR_CODES, RISK_FACTOR_CODES};
use seqrisk_core::corpus::{build_all_windows, UserTimeline};

use crate::error::{Error, Result};

pub const GROUPING_NOTE: &str = "chi-square tables count windows: factor present in any observed post \
versus the target level in the high (BR, AT) or low (IN, ID) group; co-occurrence counts users";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaReport {
    pub value: f64,
    pub items: usize,
    pub raters: u32,
    pub categories: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareRow {
    pub kind: String,
    pub code: String,
    pub a: u64,
    pub b: u64,
    pub c: u64,
    pub d: u64,
    pub statistic: Option<f64>,
    pub significant: Option<bool>,
    pub undefined: bool,
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CooccurrenceRow {
    pub risk_factor: String,
    pub users: usize,
    /// P(PF_j | RF_i) in protective-code order; absent when no user has RF_i.
    pub values: Option<Vec<f64>>,
    pub undefined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub corpus: String,
    pub window_length: usize,
    pub users: usize,
    pub posts: usize,
    pub windows: usize,
    pub grouping: String,
    pub kappa: Option<KappaReport>,
    pub chi_square: Vec<ChiSquareRow>,
    pub protective_codes: Vec<String>,
    pub cooccurrence: Vec<CooccurrenceRow>,
}

/// Ratings file: one item per row, one column of rater counts per category,
/// no header.
pub fn load_ratings(path: &Path) -> Result<RatingMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|f| f.parse::<u32>().map_err(|e| Error::parse(path, i + 1, format!("bad count \"{f}\": {e}"))))
            .collect::<Result<Vec<u32>>>()?;
        rows.push(row);
    }
    Ok(RatingMatrix::from_rows(&rows)?)
}

pub fn analyze(
    corpus_name: &str,
    users: &[UserTimeline],
    l: usize,
    ratings: Option<&RatingMatrix>,
) -> Result<AnalysisReport> {
    if users.is_empty() {
        return Err(Error::Format(format!("corpus {corpus_name} contains no posts")));
    }
    let windows = build_all_windows(users, l)?;
    if windows.is_empty() {
        return Err(Error::Format(format!(
            "corpus {corpus_name} yields no windows of length {l}; every user has at most {l} posts"
        )));
    }
    let kappa = ratings
        .map(|r| -> Result<KappaReport> {
            Ok(KappaReport {
                value: fleiss_kappa(r)?,
                items: r.n_items(),
                raters: r.raters(),
                categories: r.n_categories(),
            })
        })
        .transpose()?;

    let chi_square = factor_discrimination(&windows)?
        .into_iter()
        .map(|row| ChiSquareRow {
            kind: row.kind.label().to_string(),
            code: row.code.to_string(),
            a: row.table.a,
            b: row.table.b,
            c: row.table.c,
            d: row.table.d,
            statistic: row.chi_square.map(|c| c.statistic),
            significant: row.chi_square.map(|c| c.significant),
            undefined: row.chi_square.is_none(),
            reason: row.undefined_reason,
        })
        .collect();

    let matrix = cooccurrence(users.iter().flat_map(|u| u.posts.iter()));
    let cooccurrence = RISK_FACTOR_CODES
        .iter()
        .enumerate()
        .map(|(i, code)| CooccurrenceRow {
            risk_factor: code.to_string(),
            users: matrix.row_counts[i],
            values: matrix.values[i].map(|r| r.to_vec()),
            undefined: matrix.values[i].is_none(),
        })
        .collect();

    Ok(AnalysisReport {
        corpus: corpus_name.to_string(),
        window_length: l,
        users: users.len(),
        posts: users.iter().map(|u| u.posts.len()).sum(),
        windows: windows.len(),
        grouping: GROUPING_NOTE.to_string(),
        kappa,
        chi_square,
        protective_codes: PROTECTIVE_FACTOR_CODES.iter().map(|c| c.to_string()).collect(),
        cooccurrence,
    })
}

/// The P_ij matrix as CSV: one row per risk factor, one column per
/// protective factor; undefined rows are left empty.
pub fn write_cooccurrence_csv<W: Write>(out: W, report: &AnalysisReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["risk_factor".to_string()];
    header.extend(report.protective_codes.iter().cloned());
    w.write_record(&header)?;
    for row in &report.cooccurrence {
        let mut rec = vec![row.risk_factor.clone()];
        match &row.values {
            Some(v) => rec.extend(v.iter().map(|x| x.to_string())),
            None => rec.extend(std::iter::repeat_n(String::new(), report.protective_codes.len())),
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn write_chi_square_csv<W: Write>(out: W, report: &AnalysisReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["kind", "code", "a", "b", "c", "d", "chi_square", "significant"])?;
    for r in &report.chi_square {
        w.write_record([
            r.kind.clone(),
            r.code.clone(),
            r.a.to_string(),
            r.b.to_string(),
            r.c.to_string(),
            r.d.to_string(),
            r.statistic.map_or_else(|| "undefined".into(), |s| s.to_string()),
            r.significant.map_or_else(|| "undefined".into(), |s| s.to_string()),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}
