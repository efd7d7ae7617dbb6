//! The closed factor taxonomy and the ordinal risk scale.
//!
//! Code order is fixed: it defines the index of every factor in label
//! vectors, logits and report tables.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::{Error, Result};

pub const N_RISK_FACTORS: usize = 19;
pub const N_PROTECTIVE_FACTORS: usize = 5;
pub const N_LEVELS: usize = 4;

pub const RISK_FACTOR_CODES: [&str; N_RISK_FACTORS] = [
    "MHI", "PH", "SU", "HL", "ED", "LS", "PSP", "LSS", "IV", "PSST", "PSS", "ID", "DF", "EOS",
    "SLE", "TE", "CD", "SM", "SORI",
];

pub const PROTECTIVE_FACTOR_CODES: [&str; N_PROTECTIVE_FACTORS] = ["SS", "CS", "PC", "SR", "ML"];

/// Ordinal suicide-risk level (C-SSRS derived): IN < ID < BR < AT.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RiskLevel {
    Indicator = 0,
    Ideation = 1,
    Behavior = 2,
    Attempt = 3,
}

impl RiskLevel {
    pub const ALL: [RiskLevel; N_LEVELS] = [
        RiskLevel::Indicator,
        RiskLevel::Ideation,
        RiskLevel::Behavior,
        RiskLevel::Attempt,
    ];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn code(self) -> &'static str {
        match self {
            RiskLevel::Indicator => "IN",
            RiskLevel::Ideation => "ID",
            RiskLevel::Behavior => "BR",
            RiskLevel::Attempt => "AT",
        }
    }

    pub fn from_code(code: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|l| l.code() == code)
            .ok_or_else(|| Error::Schema(alloc::format!("unknown risk level \"{code}\"")))
    }

    /// IN and ID form the low-risk group, BR and AT the high-risk group.
    pub fn is_high_risk(self) -> bool {
        self >= RiskLevel::Behavior
    }

    pub fn lower(self) -> Self {
        Self::from_index(self.index().saturating_sub(1)).unwrap()
    }

    pub fn higher(self) -> Self {
        Self::from_index((self.index() + 1).min(N_LEVELS - 1)).unwrap()
    }
}

impl fmt::Display for RiskLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl Serialize for RiskLevel {
    fn serialize<S: Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.code())
    }
}

impl<'de> Deserialize<'de> for RiskLevel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> core::result::Result<Self, D::Error> {
        let code = String::deserialize(d)?;
        RiskLevel::from_code(&code).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FactorKind {
    Risk,
    Protective,
}

impl FactorKind {
    pub fn codes(self) -> &'static [&'static str] {
        match self {
            FactorKind::Risk => &RISK_FACTOR_CODES,
            FactorKind::Protective => &PROTECTIVE_FACTOR_CODES,
        }
    }

    pub fn len(self) -> usize {
        self.codes().len()
    }

    pub fn label(self) -> &'static str {
        match self {
            FactorKind::Risk => "risk",
            FactorKind::Protective => "protective",
        }
    }
}

/// Access point for the fixed taxonomy.
#[derive(Debug, Clone, Copy, Default)]
pub struct FactorCatalog;

impl FactorCatalog {
    pub fn risk_codes(&self) -> &'static [&'static str] {
        &RISK_FACTOR_CODES
    }

    pub fn protective_codes(&self) -> &'static [&'static str] {
        &PROTECTIVE_FACTOR_CODES
    }

    pub fn index_of(&self, kind: FactorKind, code: &str) -> Option<usize> {
        kind.codes().iter().position(|c| *c == code)
    }

    /// All 24 factors as (kind, index, code), risk factors first.
    pub fn all(&self) -> impl Iterator<Item = (FactorKind, usize, &'static str)> {
        RISK_FACTOR_CODES
            .iter()
            .enumerate()
            .map(|(i, c)| (FactorKind::Risk, i, *c))
            .chain(
                PROTECTIVE_FACTOR_CODES
                    .iter()
                    .enumerate()
                    .map(|(i, c)| (FactorKind::Protective, i, *c)),
            )
    }
}

/// Subset of one factor kind's codes, stored as a bit mask over catalog indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct FactorSet {
    bits: u32,
}

impl FactorSet {
    pub const fn empty() -> Self {
        FactorSet { bits: 0 }
    }

    pub fn full(kind: FactorKind) -> Self {
        FactorSet {
            bits: (1u32 << kind.len()) - 1,
        }
    }

    pub fn from_bits(bits: u32) -> Self {
        FactorSet { bits }
    }

    pub fn bits(self) -> u32 {
        self.bits
    }

    /// Parse codes of one kind; unknown codes and duplicates are schema errors.
    pub fn parse<S: AsRef<str>>(kind: FactorKind, codes: &[S]) -> Result<Self> {
        let mut set = FactorSet::empty();
        for code in codes {
            let code = code.as_ref();
            let idx = FactorCatalog.index_of(kind, code).ok_or_else(|| {
                Error::Schema(alloc::format!("unknown {} factor code \"{code}\"", kind.label()))
            })?;
            if set.contains(idx) {
                return Err(Error::Schema(alloc::format!(
                    "duplicate {} factor code \"{code}\"",
                    kind.label()
                )));
            }
            set.insert(idx);
        }
        Ok(set)
    }

    #[inline]
    pub fn contains(self, idx: usize) -> bool {
        self.bits & (1 << idx) != 0
    }

    #[inline]
    pub fn insert(&mut self, idx: usize) {
        self.bits |= 1 << idx;
    }

    pub fn is_empty(self) -> bool {
        self.bits == 0
    }

    pub fn len(self) -> usize {
        self.bits.count_ones() as usize
    }

    pub fn intersects(self, other: FactorSet) -> bool {
        self.bits & other.bits != 0
    }

    pub fn union(self, other: FactorSet) -> FactorSet {
        FactorSet {
            bits: self.bits | other.bits,
        }
    }

    pub fn indices(self) -> impl Iterator<Item = usize> {
        (0..32).filter(move |i| self.contains(*i))
    }

    pub fn codes(self, kind: FactorKind) -> Vec<&'static str> {
        self.indices().map(|i| kind.codes()[i]).collect()
    }

    /// 0/1 indicator vector of length `kind.len()`.
    pub fn indicator(self, kind: FactorKind) -> Vec<f64> {
        (0..kind.len())
            .map(|i| if self.contains(i) { 1.0 } else { 0.0 })
            .collect()
    }
}
