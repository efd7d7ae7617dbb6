//! Seeded synthetic corpus with known causal ground truth.
//!
//! Each user is a latent Markov chain over [`RiskLevel`]. After every post,
//! an emitted protective factor (from the effective set) lowers the next
//! level by one with probability `protective_pull`, an emitted risk factor
//! raises it with probability `risk_push`; when both are present the order
//! in which they are tried is a fair coin. Otherwise the next level is drawn
//! from a resampling distribution solved so that the chain's stationary
//! distribution equals `level_marginals` whenever that is feasible.
//!
//! Post text is assembled from fixed per-level and per-factor vocabularies,
//! so a bag-of-words featurizer sees signal for both the level and the
//! factors of every post.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::catalog::{
    FactorKind, FactorSet, RiskLevel, N_LEVELS, N_PROTECTIVE_FACTORS, N_RISK_FACTORS,
};
use crate::corpus::{LabeledWindow, Post, UserTimeline, SECONDS_PER_DAY};
use crate::{math, Error, Result};

/// Level distribution of the annotated reference corpus (IN, ID, BR, AT).
pub const REFERENCE_LEVEL_MARGINALS: [f64; N_LEVELS] = [0.375, 0.315, 0.24, 0.07];
/// Mean posting interval of the reference corpus, in days.
pub const REFERENCE_INTERVAL_DAYS: f64 = 2.54;

const BASE_TIMESTAMP: i64 = 1_600_000_000;

const LEVEL_WORDS: [[&str; 3]; N_LEVELS] = [
    ["tired", "exhausted", "drained"],
    ["wish", "disappear", "ending"],
    ["plan", "note", "goodbye"],
    ["attempted", "hospital", "overdosed"],
];

const RISK_WORDS: [[&str; 3]; N_RISK_FACTORS] = [
    ["depression", "diagnosed", "disorder"],
    ["illness", "pain", "chronic"],
    ["drinking", "drugs", "alcohol"],
    ["hopeless", "trapped", "stuck"],
    ["anxiety", "anger", "panic"],
    ["worthless", "burden", "useless"],
    ["grades", "failing", "exams"],
    ["unemployed", "broke", "homeless"],
    ["assaulted", "violence", "attacked"],
    ["relapse", "scars", "previously"],
    ["alone", "isolated", "rejected"],
    ["awkward", "friendless", "socialize"],
    ["parents", "abusive", "household"],
    ["funeral", "grieving", "mourning"],
    ["breakup", "moving", "deadline"],
    ["trauma", "flashbacks", "nightmares"],
    ["forgetful", "confused", "concentrate"],
    ["pills", "rope", "bridge"],
    ["gender", "dysphoria", "closeted"],
];

const PROTECTIVE_WORDS: [[&str; 3]; N_PROTECTIVE_FACTORS] = [
    ["supportive", "therapist", "friends"],
    ["journaling", "walking", "breathing"],
    ["hopeful", "resilient", "confident"],
    ["responsibility", "kids", "pets"],
    ["purpose", "meaning", "goals"],
];

const FILLER_WORDS: [&str; 10] = [
    "today", "really", "just", "feel", "again", "know", "think", "week", "night", "still",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub n_users: usize,
    /// Inclusive range of posts per user.
    pub posts_per_user: (usize, usize),
    pub seed: u64,
    pub level_marginals: [f64; N_LEVELS],
    pub protective_pull: f64,
    pub risk_push: f64,
    pub risk_emission: [f64; N_RISK_FACTORS],
    pub protective_emission: [f64; N_PROTECTIVE_FACTORS],
    pub interval_mean_days: f64,
    /// Level of every user's first post; sampled from the marginals if unset.
    pub initial_level: Option<RiskLevel>,
    /// Protective codes able to pull the level down.
    pub effective_protective: FactorSet,
    /// Risk codes able to push the level up.
    pub effective_risk: FactorSet,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_users: 200,
            posts_per_user: (7, 14),
            seed: 0,
            level_marginals: REFERENCE_LEVEL_MARGINALS,
            protective_pull: 0.3,
            risk_push: 0.3,
            risk_emission: [0.05; N_RISK_FACTORS],
            protective_emission: [0.15; N_PROTECTIVE_FACTORS],
            interval_mean_days: REFERENCE_INTERVAL_DAYS,
            initial_level: None,
            effective_protective: FactorSet::full(FactorKind::Protective),
            effective_risk: FactorSet::full(FactorKind::Risk),
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_users == 0 {
            return Err(Error::invalid("n_users must be at least 1"));
        }
        let (lo, hi) = self.posts_per_user;
        if lo == 0 || lo > hi {
            return Err(Error::invalid(format!("invalid posts_per_user range ({lo}, {hi})")));
        }
        let sum: f64 = self.level_marginals.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || self.level_marginals.iter().any(|p| !is_probability(*p)) {
            return Err(Error::invalid("level_marginals must be probabilities summing to 1"));
        }
        for (name, p) in [("protective_pull", self.protective_pull), ("risk_push", self.risk_push)] {
            if !is_probability(p) {
                return Err(Error::invalid(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        if self
            .risk_emission
            .iter()
            .chain(&self.protective_emission)
            .any(|p| !is_probability(*p))
        {
            return Err(Error::invalid("factor emission rates must lie in [0, 1]"));
        }
        if !(self.interval_mean_days.is_finite() && self.interval_mean_days > 0.0) {
            return Err(Error::invalid("interval_mean_days must be positive"));
        }
        Ok(())
    }

    fn presence_probability(rates: &[f64], effective: FactorSet) -> f64 {
        1.0 - rates
            .iter()
            .enumerate()
            .filter(|(i, _)| effective.contains(*i))
            .map(|(_, r)| 1.0 - r)
            .product::<f64>()
    }

    /// Probability of a forced down (`.0`) and up (`.1`) move from each level.
    /// At the lowest (highest) level a forced down (up) move keeps the level.
    pub fn forced_move_probabilities(&self) -> [(f64, f64); N_LEVELS] {
        let pp = Self::presence_probability(&self.protective_emission, self.effective_protective);
        let pr = Self::presence_probability(&self.risk_emission, self.effective_risk);
        let (pull, push) = (self.protective_pull, self.risk_push);
        let only_p = pp * (1.0 - pr);
        let only_r = (1.0 - pp) * pr;
        let both = pp * pr;
        let down = only_p * pull + both * 0.5 * (pull + (1.0 - push) * pull);
        let up = only_r * push + both * 0.5 * (push + (1.0 - pull) * push);
        [(down, up); N_LEVELS]
    }

    /// Distribution for unforced transitions. Solves the stationarity
    /// equations for the configured marginals; negative components (an
    /// infeasible target) are clipped and the result renormalized.
    pub fn resampling_distribution(&self) -> [f64; N_LEVELS] {
        let pi = self.level_marginals;
        let q = self.forced_move_probabilities();
        let mut out = [0.0; N_LEVELS];
        for j in 0..N_LEVELS {
            let inflow_down = if j + 1 < N_LEVELS { pi[j + 1] * q[j + 1].0 } else { 0.0 };
            let inflow_up = if j > 0 { pi[j - 1] * q[j - 1].1 } else { 0.0 };
            let held = match j {
                0 => pi[0] * q[0].0,
                j if j + 1 == N_LEVELS => pi[j] * q[j].1,
                _ => 0.0,
            };
            out[j] = (pi[j] - inflow_down - inflow_up - held).max(0.0);
        }
        let total: f64 = out.iter().sum();
        if total <= 0.0 {
            return pi;
        }
        out.map(|p| p / total)
    }
}

fn is_probability(p: f64) -> bool {
    (0.0..=1.0).contains(&p)
}

/// What decided the level of a post relative to its predecessor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TransitionCause {
    /// A present protective factor forced the level down by one.
    ProtectiveEffective,
    /// A present risk factor forced the level up by one.
    RiskEffective,
    /// Unforced resampling.
    Unforced,
}

impl TransitionCause {
    pub fn label(self) -> &'static str {
        match self {
            TransitionCause::ProtectiveEffective => "protective-effective",
            TransitionCause::RiskEffective => "risk-effective",
            TransitionCause::Unforced => "none",
        }
    }

    pub fn from_label(s: &str) -> Result<Self> {
        match s {
            "protective-effective" => Ok(TransitionCause::ProtectiveEffective),
            "risk-effective" => Ok(TransitionCause::RiskEffective),
            "none" => Ok(TransitionCause::Unforced),
            other => Err(Error::Schema(format!("unknown transition cause \"{other}\""))),
        }
    }
}

/// Ground truth for the transition into `post_id` (every post but a user's first).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionRecord {
    pub user_id: String,
    pub post_id: String,
    pub cause: TransitionCause,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub users: Vec<UserTimeline>,
    pub transitions: Vec<TransitionRecord>,
}

impl SyntheticCorpus {
    pub fn cause_by_post(&self) -> BTreeMap<&str, TransitionCause> {
        self.transitions
            .iter()
            .map(|t| (t.post_id.as_str(), t.cause))
            .collect()
    }

    /// Cause of each window's target transition, in window order.
    pub fn window_causes(&self, windows: &[LabeledWindow]) -> Vec<TransitionCause> {
        let map = self.cause_by_post();
        windows
            .iter()
            .map(|w| {
                map.get(w.target_post_id.as_str())
                    .copied()
                    .unwrap_or(TransitionCause::Unforced)
            })
            .collect()
    }
}

fn sample_categorical<R: Rng>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(0)
}

fn emit<R: Rng>(rng: &mut R, rates: &[f64]) -> FactorSet {
    let mut set = FactorSet::empty();
    for (i, r) in rates.iter().enumerate() {
        if rng.gen::<f64>() < *r {
            set.insert(i);
        }
    }
    set
}

fn synthesize_text<R: Rng>(
    rng: &mut R,
    level: RiskLevel,
    risk: FactorSet,
    protective: FactorSet,
) -> String {
    let mut words: Vec<&str> = Vec::new();
    let level_vocab = &LEVEL_WORDS[level.index()];
    words.extend(level_vocab.choose_multiple(rng, 2));
    for i in risk.indices() {
        words.extend(RISK_WORDS[i].choose_multiple(rng, 2));
    }
    for i in protective.indices() {
        words.extend(PROTECTIVE_WORDS[i].choose_multiple(rng, 2));
    }
    words.extend(FILLER_WORDS.choose_multiple(rng, 3));
    words.shuffle(rng);
    words.join(" ")
}

/// A forced move that hits the floor or ceiling keeps the level and is not
/// attributed to either factor type.
fn forced(level: RiskLevel, next: RiskLevel, cause: TransitionCause) -> (RiskLevel, TransitionCause) {
    if next == level {
        (level, TransitionCause::Unforced)
    } else {
        (next, cause)
    }
}

fn next_level<R: Rng>(
    rng: &mut R,
    cfg: &SyntheticConfig,
    level: RiskLevel,
    post: &Post,
    resample: &[f64; N_LEVELS],
) -> (RiskLevel, TransitionCause) {
    let p_present = post.protective_factors.intersects(cfg.effective_protective);
    let r_present = post.risk_factors.intersects(cfg.effective_risk);
    let protective_first = if p_present && r_present { rng.gen::<bool>() } else { p_present };
    let mut attempts: [Option<TransitionCause>; 2] = [None, None];
    if protective_first {
        attempts = [
            Some(TransitionCause::ProtectiveEffective),
            r_present.then_some(TransitionCause::RiskEffective),
        ];
    } else if r_present {
        attempts = [
            Some(TransitionCause::RiskEffective),
            p_present.then_some(TransitionCause::ProtectiveEffective),
        ];
    }
    for cause in attempts.into_iter().flatten() {
        match cause {
            TransitionCause::ProtectiveEffective => {
                if rng.gen::<f64>() < cfg.protective_pull {
                    return forced(level, level.lower(), cause);
                }
            }
            TransitionCause::RiskEffective => {
                if rng.gen::<f64>() < cfg.risk_push {
                    return forced(level, level.higher(), cause);
                }
            }
            TransitionCause::Unforced => {}
        }
    }
    let next = RiskLevel::from_index(sample_categorical(rng, resample)).unwrap();
    (next, TransitionCause::Unforced)
}

/// Generate a corpus; identical configs give identical corpora.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<SyntheticCorpus> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let resample = cfg.resampling_distribution();
    let mut users = Vec::with_capacity(cfg.n_users);
    let mut transitions = Vec::new();

    for u in 0..cfg.n_users {
        let user_id = format!("u{u:04}");
        let n_posts = rng.gen_range(cfg.posts_per_user.0..=cfg.posts_per_user.1);
        let mut timestamp = BASE_TIMESTAMP + rng.gen_range(0..365 * 86_400);
        let mut level = match cfg.initial_level {
            Some(l) => l,
            None => RiskLevel::from_index(sample_categorical(&mut rng, &cfg.level_marginals)).unwrap(),
        };
        let mut posts = Vec::with_capacity(n_posts);
        for t in 0..n_posts {
            let risk_factors = emit(&mut rng, &cfg.risk_emission);
            let protective_factors = emit(&mut rng, &cfg.protective_emission);
            let text = synthesize_text(&mut rng, level, risk_factors, protective_factors);
            let post = Post {
                user_id: user_id.clone(),
                post_id: format!("{user_id}-p{t:03}"),
                timestamp,
                text,
                risk_level: level,
                risk_factors,
                protective_factors,
            };
            if t + 1 < n_posts {
                let (next, cause) = next_level(&mut rng, cfg, level, &post, &resample);
                transitions.push(TransitionRecord {
                    user_id: user_id.clone(),
                    post_id: format!("{user_id}-p{:03}", t + 1),
                    cause,
                });
                level = next;
                let u: f64 = rng.gen();
                let gap_days = -cfg.interval_mean_days * math::ln(1.0 - u);
                timestamp += (gap_days * SECONDS_PER_DAY) as i64;
            }
            posts.push(post);
        }
        users.push(UserTimeline::new(user_id, posts)?);
    }
    Ok(SyntheticCorpus { users, transitions })
}
