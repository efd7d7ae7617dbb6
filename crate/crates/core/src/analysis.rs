//! Annotation analytics: rater agreement, factor discrimination between
//! low- and high-risk groups, and risk/protective co-occurrence.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::catalog::{FactorCatalog, FactorKind, FactorSet, N_PROTECTIVE_FACTORS, N_RISK_FACTORS};
use crate::corpus::{LabeledWindow, Post};
use crate::{Error, Result};

/// Chi-square critical value for df = 1 at alpha = 0.05.
pub const CHI2_CRITICAL_DF1_05: f64 = 3.841;

/// `counts[i * n_categories + j]` raters put item `i` in category `j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RatingMatrix {
    n_items: usize,
    n_categories: usize,
    counts: Vec<u32>,
    raters: u32,
}

impl RatingMatrix {
    pub fn new(n_items: usize, n_categories: usize, counts: Vec<u32>) -> Result<Self> {
        if n_items == 0 || n_categories == 0 {
            return Err(Error::invalid("rating matrix needs at least one item and category"));
        }
        if counts.len() != n_items * n_categories {
            return Err(Error::invalid(format!(
                "expected {} counts, got {}",
                n_items * n_categories,
                counts.len()
            )));
        }
        let raters: u32 = counts[..n_categories].iter().sum();
        if raters < 2 {
            return Err(Error::invalid("at least two raters per item are required"));
        }
        for (i, row) in counts.chunks(n_categories).enumerate() {
            let s: u32 = row.iter().sum();
            if s != raters {
                return Err(Error::invalid(format!(
                    "item {i} has {s} ratings, expected {raters}"
                )));
            }
        }
        Ok(RatingMatrix { n_items, n_categories, counts, raters })
    }

    pub fn from_rows(rows: &[Vec<u32>]) -> Result<Self> {
        let n_categories = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != n_categories) {
            return Err(Error::invalid("ragged rating rows"));
        }
        Self::new(rows.len(), n_categories, rows.concat())
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn n_categories(&self) -> usize {
        self.n_categories
    }

    pub fn raters(&self) -> u32 {
        self.raters
    }

    pub fn row(&self, item: usize) -> &[u32] {
        &self.counts[item * self.n_categories..(item + 1) * self.n_categories]
    }
}

/// Fleiss' kappa. When only one category is ever used, agreement is perfect
/// and chance agreement is 1; that case is defined as 1.0.
pub fn fleiss_kappa(ratings: &RatingMatrix) -> Result<f64> {
    let n = ratings.raters as f64;
    let items = ratings.n_items as f64;
    let mut category_totals = alloc::vec![0.0; ratings.n_categories];
    let mut p_bar = 0.0;
    for i in 0..ratings.n_items {
        let row = ratings.row(i);
        let agree: f64 = row.iter().map(|&c| (c as f64) * (c as f64 - 1.0)).sum();
        p_bar += agree / (n * (n - 1.0));
        for (t, &c) in category_totals.iter_mut().zip(row) {
            *t += c as f64;
        }
    }
    p_bar /= items;
    let p_e: f64 = category_totals
        .iter()
        .map(|t| {
            let p = t / (items * n);
            p * p
        })
        .sum();
    if (1.0 - p_e).abs() < 1e-12 {
        return if (1.0 - p_bar).abs() < 1e-12 {
            Ok(1.0)
        } else {
            Err(Error::UndefinedResult("chance agreement is 1 but observed agreement is not".into()))
        };
    }
    Ok((p_bar - p_e) / (1.0 - p_e))
}

/// Factor presence (rows) by risk group (columns).
///
/// ```text
///                high   low
/// present         a      b
/// absent          c      d
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ContingencyTable2x2 {
    pub a: u64,
    pub b: u64,
    pub c: u64,
    pub d: u64,
}

impl ContingencyTable2x2 {
    pub fn new(a: u64, b: u64, c: u64, d: u64) -> Self {
        ContingencyTable2x2 { a, b, c, d }
    }

    pub fn total(&self) -> u64 {
        self.a + self.b + self.c + self.d
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquare {
    pub statistic: f64,
    /// `statistic > 3.841` (df = 1, alpha = 0.05).
    pub significant: bool,
}

/// Pearson chi-square without continuity correction.
pub fn chi_square_2x2(t: &ContingencyTable2x2) -> Result<ChiSquare> {
    let marginals = [
        ("factor-present row", t.a + t.b),
        ("factor-absent row", t.c + t.d),
        ("high-risk column", t.a + t.c),
        ("low-risk column", t.b + t.d),
    ];
    if let Some((name, _)) = marginals.iter().find(|(_, m)| *m == 0) {
        return Err(Error::UndefinedResult(format!("zero marginal: {name}")));
    }
    let (a, b, c, d) = (t.a as f64, t.b as f64, t.c as f64, t.d as f64);
    let n = a + b + c + d;
    let diff = a * d - b * c;
    let denom: f64 = marginals.iter().map(|(_, m)| *m as f64).product();
    let statistic = n * diff * diff / denom;
    Ok(ChiSquare { statistic, significant: statistic > CHI2_CRITICAL_DF1_05 })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactorDiscrimination {
    pub kind: FactorKind,
    pub code: &'static str,
    pub table: ContingencyTable2x2,
    /// `None` when the table has a zero marginal (e.g. the factor never occurs).
    pub chi_square: Option<ChiSquare>,
    pub undefined_reason: Option<String>,
}

/// One 2x2 table per factor: factor present anywhere in the observed window
/// versus the window's TARGET level in the high (BR, AT) or low (IN, ID)
/// group. Rows are sorted by descending chi-square, undefined rows last.
pub fn factor_discrimination(windows: &[LabeledWindow]) -> Result<Vec<FactorDiscrimination>> {
    if windows.is_empty() {
        return Err(Error::invalid("factor discrimination needs at least one window"));
    }
    let presence: Vec<(FactorSet, FactorSet, bool)> = windows
        .iter()
        .map(|w| {
            let (r, p) = w.observed.iter().fold(
                (FactorSet::empty(), FactorSet::empty()),
                |(r, p), post| (r.union(post.risk_factors), p.union(post.protective_factors)),
            );
            (r, p, w.target_level.is_high_risk())
        })
        .collect();

    let mut rows: Vec<FactorDiscrimination> = FactorCatalog
        .all()
        .map(|(kind, idx, code)| {
            let mut t = ContingencyTable2x2::default();
            for (r, p, high) in &presence {
                let present = match kind {
                    FactorKind::Risk => r.contains(idx),
                    FactorKind::Protective => p.contains(idx),
                };
                match (present, high) {
                    (true, true) => t.a += 1,
                    (true, false) => t.b += 1,
                    (false, true) => t.c += 1,
                    (false, false) => t.d += 1,
                }
            }
            let (chi_square, undefined_reason) = match chi_square_2x2(&t) {
                Ok(c) => (Some(c), None),
                Err(e) => (None, Some(format!("{e}"))),
            };
            FactorDiscrimination { kind, code, table: t, chi_square, undefined_reason }
        })
        .collect();

    rows.sort_by(|x, y| match (&x.chi_square, &y.chi_square) {
        (Some(a), Some(b)) => b.statistic.total_cmp(&a.statistic),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => Ordering::Equal,
    });
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CooccurrenceMatrix {
    /// `values[i][j]` = P(user has PF_j | user has RF_i); `None` when no user has RF_i.
    pub values: [Option<[f64; N_PROTECTIVE_FACTORS]>; N_RISK_FACTORS],
    /// Users having each risk factor in any post.
    pub row_counts: [usize; N_RISK_FACTORS],
}

impl CooccurrenceMatrix {
    pub fn get(&self, risk: usize, protective: usize) -> Option<f64> {
        self.values[risk].map(|row| row[protective])
    }
}

/// Risk/protective co-occurrence counted over users: a user "has" a factor
/// if any of their posts carries it.
pub fn cooccurrence<'a, I>(posts: I) -> CooccurrenceMatrix
where
    I: IntoIterator<Item = &'a Post>,
{
    let mut per_user: BTreeMap<&str, (FactorSet, FactorSet)> = BTreeMap::new();
    for p in posts {
        let e = per_user.entry(p.user_id.as_str()).or_default();
        e.0 = e.0.union(p.risk_factors);
        e.1 = e.1.union(p.protective_factors);
    }
    let mut row_counts = [0usize; N_RISK_FACTORS];
    let mut joint = [[0usize; N_PROTECTIVE_FACTORS]; N_RISK_FACTORS];
    for (risk, prot) in per_user.values() {
        for i in risk.indices() {
            row_counts[i] += 1;
            for j in prot.indices() {
                joint[i][j] += 1;
            }
        }
    }
    let mut values = [None; N_RISK_FACTORS];
    for i in 0..N_RISK_FACTORS {
        if row_counts[i] > 0 {
            values[i] = Some(joint[i].map(|c| c as f64 / row_counts[i] as f64));
        }
    }
    CooccurrenceMatrix { values, row_counts }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    #[test]
    fn kappa_perfect_agreement() {
        let r = RatingMatrix::from_rows(&[vec![3, 0], vec![0, 3], vec![3, 0]]).unwrap();
        assert_eq!(fleiss_kappa(&r).unwrap(), 1.0);
    }

    #[test]
    fn kappa_hand_example() {
        let r = RatingMatrix::from_rows(&[vec![2, 1], vec![1, 2]]).unwrap();
        assert!((fleiss_kappa(&r).unwrap() + 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn kappa_single_category_convention() {
        let r = RatingMatrix::from_rows(&[vec![4, 0, 0], vec![4, 0, 0]]).unwrap();
        assert_eq!(fleiss_kappa(&r).unwrap(), 1.0);
    }

    #[test]
    fn rating_rows_must_agree_on_rater_count() {
        assert!(RatingMatrix::from_rows(&[vec![2, 1], vec![1, 1]]).is_err());
        assert!(RatingMatrix::from_rows(&[vec![1, 0]]).is_err());
    }

    #[test]
    fn chi_square_examples() {
        let c = chi_square_2x2(&ContingencyTable2x2::new(10, 20, 20, 10)).unwrap();
        assert!((c.statistic - 20.0 / 3.0).abs() < 1e-12);
        assert!(c.significant);
        let z = chi_square_2x2(&ContingencyTable2x2::new(15, 15, 15, 15)).unwrap();
        assert_eq!(z.statistic, 0.0);
        assert!(!z.significant);
        let one = chi_square_2x2(&ContingencyTable2x2::new(1, 0, 0, 1)).unwrap().statistic;
        let hundred = chi_square_2x2(&ContingencyTable2x2::new(100, 0, 0, 100)).unwrap().statistic;
        assert!((hundred - 100.0 * one).abs() < 1e-9);
    }

    #[test]
    fn chi_square_zero_marginal_names_it() {
        let err = chi_square_2x2(&ContingencyTable2x2::new(0, 0, 4, 5)).unwrap_err();
        assert!(matches!(err, Error::UndefinedResult(m) if m.contains("factor-present")));
    }

    fn post(user: &str, rf: &[&str], pf: &[&str]) -> Post {
        Post {
            user_id: user.to_string(),
            post_id: format!("{user}-{}", rf.len() + pf.len()),
            timestamp: 0,
            text: String::new(),
            risk_level: crate::RiskLevel::Indicator,
            risk_factors: FactorSet::parse(FactorKind::Risk, rf).unwrap(),
            protective_factors: FactorSet::parse(FactorKind::Protective, pf).unwrap(),
        }
    }

    #[test]
    fn cooccurrence_counts_users() {
        let posts = vec![
            post("a", &["HL"], &[]),
            post("a", &[], &["SS"]),
            post("b", &["HL"], &[]),
            post("c", &["HL", "SU"], &["CS"]),
        ];
        let m = cooccurrence(&posts);
        let hl = 3;
        assert_eq!(m.row_counts[hl], 3);
        assert!((m.get(hl, 0).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(m.get(2, 1), Some(1.0)); // SU -> CS
        assert_eq!(m.get(0, 0), None); // MHI never present
        let mut more = posts.clone();
        more.push(post("d", &[], &[]));
        assert_eq!(cooccurrence(&more), m);
    }
}
