//! Posts, per-user timelines, sliding windows and user-disjoint folds.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::catalog::{FactorSet, RiskLevel, N_LEVELS};
use crate::{Error, Result};

pub const SECONDS_PER_DAY: f64 = 86_400.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Post {
    pub user_id: String,
    pub post_id: String,
    /// Epoch seconds, UTC.
    pub timestamp: i64,
    pub text: String,
    pub risk_level: RiskLevel,
    pub risk_factors: FactorSet,
    pub protective_factors: FactorSet,
}

impl Post {
    pub fn validate(&self) -> Result<()> {
        if self.timestamp < 0 {
            return Err(Error::Schema(format!(
                "post {} has negative timestamp {}",
                self.post_id, self.timestamp
            )));
        }
        Ok(())
    }
}

/// One user's posts in chronological order.
#[derive(Debug, Clone, PartialEq)]
pub struct UserTimeline {
    pub user_id: String,
    pub posts: Vec<Post>,
}

impl UserTimeline {
    /// Group posts by user (ordered by user id) and sort each timeline by
    /// timestamp, breaking ties by post id.
    pub fn group(posts: Vec<Post>) -> Result<Vec<UserTimeline>> {
        let mut by_user: BTreeMap<String, Vec<Post>> = BTreeMap::new();
        for post in posts {
            post.validate()?;
            by_user.entry(post.user_id.clone()).or_default().push(post);
        }
        by_user
            .into_iter()
            .map(|(user_id, posts)| UserTimeline::new(user_id, posts))
            .collect()
    }

    pub fn new(user_id: String, mut posts: Vec<Post>) -> Result<Self> {
        if posts.is_empty() {
            return Err(Error::Schema(format!("user {user_id} has no posts")));
        }
        if let Some(p) = posts.iter().find(|p| p.user_id != user_id) {
            return Err(Error::Schema(format!(
                "post {} belongs to {}, not {user_id}",
                p.post_id, p.user_id
            )));
        }
        posts.sort_by(|a, b| {
            a.timestamp
                .cmp(&b.timestamp)
                .then_with(|| a.post_id.cmp(&b.post_id))
        });
        let mut ids: Vec<&str> = posts.iter().map(|p| p.post_id.as_str()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Schema(format!(
                "duplicate post_id \"{}\" for user {user_id}",
                w[0]
            )));
        }
        Ok(UserTimeline { user_id, posts })
    }

    /// Most frequent risk level over all posts; ties go to the lower level.
    pub fn majority_level(&self) -> RiskLevel {
        let mut counts = [0usize; N_LEVELS];
        for p in &self.posts {
            counts[p.risk_level.index()] += 1;
        }
        majority_index(&counts)
    }
}

/// Index of the largest count, lowest index on ties.
pub(crate) fn majority_index(counts: &[usize; N_LEVELS]) -> RiskLevel {
    let mut best = 0;
    for i in 1..N_LEVELS {
        if counts[i] > counts[best] {
            best = i;
        }
    }
    RiskLevel::from_index(best).unwrap()
}

/// `l` consecutive posts and the risk level of the post that follows them.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledWindow {
    pub user_id: String,
    pub observed: Vec<Post>,
    pub target_level: RiskLevel,
    pub target_post_id: String,
    /// Days from each observed post to the last observed post.
    pub delta_days: Vec<f64>,
    /// Days from the last observed post to the target post.
    pub target_gap_days: f64,
}

impl LabeledWindow {
    pub fn len(&self) -> usize {
        self.observed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observed.is_empty()
    }

    pub fn last_level(&self) -> RiskLevel {
        self.observed.last().expect("window is non-empty").risk_level
    }

    pub fn last_post_id(&self) -> &str {
        &self.observed.last().expect("window is non-empty").post_id
    }
}

/// Slide a window of `l` posts over the timeline one post at a time.
///
/// Yields `max(0, n - l)` windows; window `i` observes `posts[i..i+l]` and
/// targets `posts[i+l]`.
pub fn build_windows(timeline: &UserTimeline, l: usize) -> Result<Vec<LabeledWindow>> {
    if l == 0 {
        return Err(Error::invalid("window length must be at least 1"));
    }
    let posts = &timeline.posts;
    let n = posts.len().saturating_sub(l);
    let mut out = Vec::with_capacity(n);
    for start in 0..n {
        let observed = &posts[start..start + l];
        let target = &posts[start + l];
        let anchor = observed[l - 1].timestamp;
        let delta_days = observed
            .iter()
            .map(|p| (anchor - p.timestamp) as f64 / SECONDS_PER_DAY)
            .collect();
        out.push(LabeledWindow {
            user_id: timeline.user_id.clone(),
            observed: observed.to_vec(),
            target_level: target.risk_level,
            target_post_id: target.post_id.clone(),
            delta_days,
            target_gap_days: (target.timestamp - anchor) as f64 / SECONDS_PER_DAY,
        });
    }
    Ok(out)
}

/// Windows of every user, in user order.
pub fn build_all_windows(users: &[UserTimeline], l: usize) -> Result<Vec<LabeledWindow>> {
    let mut out = Vec::new();
    for u in users {
        out.extend(build_windows(u, l)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    pub k: usize,
    pub fold_of_user: BTreeMap<String, usize>,
}

impl FoldAssignment {
    pub fn fold_of(&self, user_id: &str) -> Option<usize> {
        self.fold_of_user.get(user_id).copied()
    }

    pub fn test_users(&self, fold: usize) -> Vec<&str> {
        self.fold_of_user
            .iter()
            .filter(|(_, f)| **f == fold)
            .map(|(u, _)| u.as_str())
            .collect()
    }

    pub fn train_users(&self, fold: usize) -> Vec<&str> {
        self.fold_of_user
            .iter()
            .filter(|(_, f)| **f != fold)
            .map(|(u, _)| u.as_str())
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = alloc::vec![0; self.k];
        for f in self.fold_of_user.values() {
            sizes[*f] += 1;
        }
        sizes
    }
}

/// Assign users to `k` folds, stratified by each user's majority risk level.
///
/// Users of every stratum with at least `k` members are shuffled and dealt
/// round-robin; members of smaller strata are pooled, shuffled and dealt
/// last. A single dealing cursor runs across all strata, so fold sizes differ
/// by at most one.
pub fn split_users(users: &[UserTimeline], k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::invalid(format!("fold count must be >= 2, got {k}")));
    }
    if users.len() < k {
        return Err(Error::invalid(format!(
            "cannot split {} users into {k} folds",
            users.len()
        )));
    }
    let mut strata: [Vec<&str>; N_LEVELS] = Default::default();
    let mut seen = BTreeMap::new();
    for u in users {
        if seen.insert(u.user_id.as_str(), ()).is_some() {
            return Err(Error::invalid(format!("user {} listed twice", u.user_id)));
        }
        strata[u.majority_level().index()].push(u.user_id.as_str());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<&str> = Vec::with_capacity(users.len());
    let mut pooled: Vec<&str> = Vec::new();
    for stratum in strata.iter_mut() {
        stratum.sort_unstable();
        if stratum.len() >= k {
            stratum.shuffle(&mut rng);
            order.extend(stratum.iter());
        } else {
            pooled.extend(stratum.iter());
        }
    }
    pooled.shuffle(&mut rng);
    order.extend(pooled);

    let fold_of_user = order
        .into_iter()
        .enumerate()
        .map(|(i, u)| (String::from(u), i % k))
        .collect();
    Ok(FoldAssignment { k, fold_of_user })
}
