//! Uncertainty-weighted joint training, early stopping, user-disjoint
//! cross-validation, grid search and one-parameter sweeps.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::{RiskLevel, N_LEVELS};
use crate::corpus::{build_all_windows, build_windows, split_users, FoldAssignment, UserTimeline};
use crate::decoder::LossBundle;
use crate::embedding::EmbeddingProvider;
use crate::math;
use crate::metrics::{argmax_level, graded_counts, graded_scores, mean_scores, GradedCounts, GradedScores};
use crate::model::{
    batch_objective, encode_windows, forward_window, Ablations, EncodedWindow, ModelDims, ModelParameters,
    ObjectiveSettings,
};
use crate::{Error, Result};

/// Learned log standard deviations, one per task, in the order
/// (risk level, protective factors, risk factors, dynamic factors).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UncertaintyWeights {
    pub log_sigma: [f64; 4],
}

impl UncertaintyWeights {
    pub fn from_sigma(sigma: [f64; 4]) -> Self {
        UncertaintyWeights { log_sigma: sigma.map(math::ln) }
    }

    pub fn sigma(&self) -> [f64; 4] {
        self.log_sigma.map(math::exp)
    }

    /// `1 / (2 sigma_k^2)` per task.
    pub fn task_scales(&self) -> [f64; 4] {
        self.log_sigma.map(|s| 0.5 * math::exp(-2.0 * s))
    }

    pub fn total_loss(&self, losses: &LossBundle, ablations: &Ablations) -> f64 {
        total_loss(losses, self, ablations)
    }
}

/// `sum_k L_k / (2 sigma_k^2) + log sigma_k` over enabled tasks.
pub fn total_loss(losses: &LossBundle, weights: &UncertaintyWeights, ablations: &Ablations) -> f64 {
    let enabled = ablations.enabled();
    let scales = weights.task_scales();
    losses
        .as_array()
        .iter()
        .enumerate()
        .filter(|(k, _)| enabled[*k])
        .map(|(k, l)| l * scales[k] + weights.log_sigma[k])
        .sum()
}

fn default_l() -> usize {
    4
}
fn default_tau() -> f64 {
    0.4
}
fn default_alpha() -> f64 {
    1.0
}
fn default_lr() -> f64 {
    1e-3
}
fn default_dropout() -> f64 {
    0.1
}
fn default_hidden() -> usize {
    8
}
fn default_attention() -> usize {
    8
}
fn default_factor_hidden() -> usize {
    16
}
fn default_risk_hidden() -> usize {
    16
}
fn default_max_epochs() -> usize {
    200
}
fn default_patience() -> usize {
    10
}
fn default_batch() -> usize {
    32
}
fn default_val_fraction() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    /// Posts per window.
    #[serde(default = "default_l")]
    pub l: usize,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Adam step size; zero freezes the parameters.
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_dropout")]
    pub dropout: f64,
    /// LSTM width per direction (`d_u = 2 * hidden`).
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    #[serde(default = "default_attention")]
    pub attention: usize,
    #[serde(default = "default_factor_hidden")]
    pub factor_hidden: usize,
    #[serde(default = "default_risk_hidden")]
    pub risk_hidden: usize,
    #[serde(default = "default_max_epochs")]
    pub max_epochs: usize,
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    /// Share of training users held out for early stopping.
    #[serde(default = "default_val_fraction")]
    pub validation_fraction: f64,
    #[serde(default)]
    pub ablations: Ablations,
    #[serde(default)]
    pub pool_gated: bool,
    #[serde(default)]
    pub early_stopping: StopMetric,
}

/// Validation quantity watched by early stopping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StopMetric {
    /// The uncertainty-weighted objective.
    #[default]
    Total,
    /// The risk-level loss alone.
    Risk,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            l: default_l(),
            tau: default_tau(),
            alpha: default_alpha(),
            learning_rate: default_lr(),
            dropout: default_dropout(),
            hidden: default_hidden(),
            attention: default_attention(),
            factor_hidden: default_factor_hidden(),
            risk_hidden: default_risk_hidden(),
            max_epochs: default_max_epochs(),
            patience: default_patience(),
            seed: 0,
            batch_size: default_batch(),
            validation_fraction: default_val_fraction(),
            ablations: Ablations::default(),
            pool_gated: false,
            early_stopping: StopMetric::default(),
        }
    }
}

impl TrainConfig {
    pub fn d_u(&self) -> usize {
        2 * self.hidden
    }

    pub fn dims(&self, embed: usize) -> ModelDims {
        ModelDims {
            embed,
            hidden: self.hidden,
            attention: self.attention,
            factor_hidden: self.factor_hidden,
            risk_hidden: self.risk_hidden,
        }
    }

    pub fn objective_settings(&self) -> ObjectiveSettings {
        ObjectiveSettings {
            tau: self.tau,
            alpha: self.alpha,
            ablations: self.ablations,
            pool_gated: self.pool_gated,
            dropout: self.dropout,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.l == 0 {
            return bad("l must be >= 1".into());
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad(format!("tau must be positive and finite, got {}", self.tau));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be >= 0, got {}", self.alpha));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be >= 0, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad(format!("validation_fraction must lie in [0, 1), got {}", self.validation_fraction));
        }
        if self.hidden == 0 || self.attention == 0 || self.factor_hidden == 0 || self.risk_hidden == 0 {
            return bad("model dimensions must be positive".into());
        }
        if self.max_epochs == 0 || self.patience == 0 || self.batch_size == 0 {
            return bad("max_epochs, patience and batch_size must be >= 1".into());
        }
        Ok(())
    }
}

/// Adam over the flattened parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u32,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let b1 = 1.0 - math::powi(self.beta1, self.t);
        let b2 = 1.0 - math::powi(self.beta2, self.t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mh = self.m[i] / b1;
            let vh = self.v[i] / b2;
            params[i] -= self.lr * mh / (math::sqrt(vh) + self.eps);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 0 is the untrained model.
    pub epoch: usize,
    pub train: LossBundle,
    pub train_total: f64,
    pub validation: Option<LossBundle>,
    pub validation_total: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Parameters of the best epoch.
    pub params: ModelParameters,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub validation_users: Vec<String>,
}

/// Deterministic (dropout-free) losses over a whole window set.
pub fn evaluate_objective(
    params: &ModelParameters,
    windows: &[EncodedWindow],
    settings: &ObjectiveSettings,
) -> Result<(LossBundle, f64)> {
    let refs: Vec<&EncodedWindow> = windows.iter().collect();
    let e = batch_objective(params, &refs, settings, None, None)?;
    Ok((e.losses, e.total))
}

/// Hold out `fraction` of the users (at least one when `fraction > 0` and
/// two or more users remain), chosen by a seeded shuffle.
pub fn validation_split(users: &[UserTimeline], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..users.len()).collect();
    let mut n_val = libm::round(fraction * users.len() as f64) as usize;
    if fraction > 0.0 && n_val == 0 && users.len() >= 2 {
        n_val = 1;
    }
    n_val = n_val.min(users.len().saturating_sub(1));
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_7a11);
    idx.shuffle(&mut rng);
    let val = idx.split_off(users.len() - n_val);
    (idx, val)
}

/// Split off validation users, build windows and train.
pub fn train(users: &[UserTimeline], provider: &dyn EmbeddingProvider, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let (tr, va) = validation_split(users, config.validation_fraction, config.seed);
    let pick = |ids: &[usize]| -> Vec<UserTimeline> { ids.iter().map(|i| users[*i].clone()).collect() };
    let train_users = pick(&tr);
    let val_users = pick(&va);
    let train_w = encode_windows(&build_all_windows(&train_users, config.l)?, provider)?;
    let val_w = encode_windows(&build_all_windows(&val_users, config.l)?, provider)?;
    let mut out = train_windows(&train_w, &val_w, provider.dim(), config)?;
    out.validation_users = val_users.into_iter().map(|u| u.user_id).collect();
    Ok(out)
}

/// Minibatch Adam with early stopping on the validation total loss (the
/// training total when there are no validation windows).
pub fn train_windows(
    train: &[EncodedWindow],
    validation: &[EncodedWindow],
    embed_dim: usize,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::invalid(format!("no training windows at l = {}", config.l)));
    }
    let settings = config.objective_settings();
    let mut params = ModelParameters::init(config.dims(embed_dim), config.seed)?;
    let mut flat = params.flatten();
    let mut adam = Adam::new(flat.len(), config.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let monitor = |p: &ModelParameters| -> Result<Option<(LossBundle, f64)>> {
        if validation.is_empty() {
            Ok(None)
        } else {
            evaluate_objective(p, validation, &settings).map(Some)
        }
    };

    let (initial, initial_total) = evaluate_objective(&params, train, &settings)?;
    let val0 = monitor(&params)?;
    let mut history = vec![EpochRecord {
        epoch: 0,
        train: initial,
        train_total: initial_total,
        validation: val0.map(|v| v.0),
        validation_total: val0.map(|v| v.1),
    }];

    let mut best = (f64::INFINITY, 0usize, params.clone());
    let mut since_best = 0;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epochs_run = 0;
    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut sum = LossBundle::default();
        let mut sum_total = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&EncodedWindow> = chunk.iter().map(|i| &train[*i]).collect();
            let mut grad = params.zeros_like();
            let eval = batch_objective(&params, &batch, &settings, Some(&mut rng), Some(&mut grad))?;
            if !eval.total.is_finite() || !eval.losses.is_finite() {
                return Err(Error::Diverged { epoch, batch: b });
            }
            let w = chunk.len() as f64 / train.len() as f64;
            sum.sr += w * eval.losses.sr;
            sum.pf += w * eval.losses.pf;
            sum.rf += w * eval.losses.rf;
            sum.df += w * eval.losses.df;
            sum_total += w * eval.total;
            adam.step(&mut flat, &grad.flatten());
            if flat.iter().any(|v| !v.is_finite()) {
                return Err(Error::Diverged { epoch, batch: b });
            }
            params.assign_flat(&flat);
        }
        epochs_run = epoch;
        let val = monitor(&params)?;
        history.push(EpochRecord {
            epoch,
            train: sum,
            train_total: sum_total,
            validation: val.map(|v| v.0),
            validation_total: val.map(|v| v.1),
        });
        let (losses, total) = match val {
            Some(v) => v,
            None => evaluate_objective(&params, train, &settings)?,
        };
        let score = match config.early_stopping {
            StopMetric::Total => total,
            StopMetric::Risk => losses.sr,
        };
        if !score.is_finite() {
            return Err(Error::Diverged { epoch, batch: 0 });
        }
        if score < best.0 {
            best = (score, epoch, params.clone());
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                log::debug!("early stop at epoch {epoch}, best epoch {}", best.1);
                break;
            }
        }
    }
    Ok(TrainOutcome { params: best.2, history, best_epoch: best.1, epochs_run, validation_users: Vec::new() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowPrediction {
    pub user_id: String,
    pub target_post_id: String,
    pub predicted: RiskLevel,
    pub truth: RiskLevel,
    pub last_level: RiskLevel,
    pub probs: [f64; N_LEVELS],
    pub s_p: f64,
    /// The arg max was shared and resolved to the lower level.
    pub tied: bool,
}

pub fn predict(
    params: &ModelParameters,
    windows: &[EncodedWindow],
    settings: &ObjectiveSettings,
) -> Result<Vec<WindowPrediction>> {
    windows
        .iter()
        .map(|w| {
            let out = forward_window(params, w, settings)?;
            let (predicted, tied) = argmax_level(&out.risk_probs);
            if tied {
                log::debug!("tied risk distribution for {}; predicting {}", w.target_post_id, predicted.code());
            }
            Ok(WindowPrediction {
                user_id: w.user_id.clone(),
                target_post_id: w.target_post_id.clone(),
                predicted,
                truth: w.target_level,
                last_level: w.last_level,
                probs: out.risk_probs,
                s_p: out.alignment.protective,
                tied,
            })
        })
        .collect()
}

/// Most frequent level, ties toward the lower level.
pub fn majority_level(levels: &[RiskLevel]) -> Option<RiskLevel> {
    if levels.is_empty() {
        return None;
    }
    let mut counts = [0usize; N_LEVELS];
    for l in levels {
        counts[l.index()] += 1;
    }
    Some(crate::corpus::majority_index(&counts))
}

/// Graded counts of always predicting `level`, from label counts alone.
pub fn majority_baseline_counts(truths: &[RiskLevel], level: RiskLevel) -> GradedCounts {
    GradedCounts {
        tp: truths.iter().filter(|t| **t == level).count(),
        fp: truths.iter().filter(|t| **t < level).count(),
        fn_: truths.iter().filter(|t| **t > level).count(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub train_windows: usize,
    pub test_users: Vec<String>,
    pub counts: GradedCounts,
    pub scores: GradedScores,
    /// Majority level of the fold's training targets.
    pub majority: RiskLevel,
    pub baseline_counts: GradedCounts,
    pub baseline_scores: GradedScores,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub history: Vec<EpochRecord>,
    pub predictions: Vec<WindowPrediction>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossValidation {
    pub assignment: FoldAssignment,
    pub folds: Vec<FoldResult>,
    pub mean: GradedScores,
    pub baseline_mean: GradedScores,
}

fn run_fold(
    users: &[UserTimeline],
    assignment: &FoldAssignment,
    fold: usize,
    provider: &dyn EmbeddingProvider,
    config: &TrainConfig,
) -> Result<FoldResult> {
    let (train_users, test_users): (Vec<UserTimeline>, Vec<UserTimeline>) =
        users.iter().cloned().partition(|u| assignment.fold_of(&u.user_id) != Some(fold));
    let train_ids: BTreeSet<&str> = train_users.iter().map(|u| u.user_id.as_str()).collect();
    assert!(
        test_users.iter().all(|u| !train_ids.contains(u.user_id.as_str())),
        "fold {fold}: test user present in training"
    );

    let mut cfg = config.clone();
    cfg.seed = config.seed.wrapping_add(fold as u64);
    let outcome = train(&train_users, provider, &cfg)?;

    let train_windows = build_all_windows(&train_users, config.l)?;
    let train_targets: Vec<RiskLevel> = train_windows.iter().map(|w| w.target_level).collect();
    let majority =
        majority_level(&train_targets).ok_or_else(|| Error::invalid("fold has no training windows"))?;
    let test = encode_windows(&build_all_windows(&test_users, config.l)?, provider)?;
    if test.is_empty() {
        return Err(Error::invalid("fold has no test windows"));
    }
    let predictions = predict(&outcome.params, &test, &cfg.objective_settings())?;
    let preds: Vec<RiskLevel> = predictions.iter().map(|p| p.predicted).collect();
    let truths: Vec<RiskLevel> = predictions.iter().map(|p| p.truth).collect();
    let counts = graded_counts(&preds, &truths)?;
    let baseline_counts = majority_baseline_counts(&truths, majority);
    Ok(FoldResult {
        fold,
        train_windows: train_windows.len(),
        test_users: test_users.into_iter().map(|u| u.user_id).collect(),
        counts,
        scores: graded_scores(counts)?,
        majority,
        baseline_counts,
        baseline_scores: graded_scores(baseline_counts)?,
        best_epoch: outcome.best_epoch,
        epochs_run: outcome.epochs_run,
        history: outcome.history,
        predictions,
    })
}

/// `k`-fold user-disjoint cross-validation. Fold `f` trains with seed
/// `config.seed + f`; the user split uses `config.seed`.
pub fn cross_validate(
    users: &[UserTimeline],
    provider: &dyn EmbeddingProvider,
    config: &TrainConfig,
    k: usize,
) -> Result<CrossValidation> {
    config.validate()?;
    let assignment = split_users(users, k, config.seed)?;
    let mut folds = Vec::with_capacity(k);
    for fold in 0..k {
        let r = run_fold(users, &assignment, fold, provider, config)
            .map_err(|e| Error::Fold { fold, source: alloc::boxed::Box::new(e) })?;
        log::info!("fold {fold}: FS {:.4} (baseline {:.4})", r.scores.fs, r.baseline_scores.fs);
        folds.push(r);
    }
    let mean = mean_scores(&folds.iter().map(|f| f.scores).collect::<Vec<_>>())?;
    let baseline_mean = mean_scores(&folds.iter().map(|f| f.baseline_scores).collect::<Vec<_>>())?;
    Ok(CrossValidation { assignment, folds, mean, baseline_mean })
}

/// Value lists to combine exhaustively; an empty list keeps the base value.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    #[serde(default)]
    pub learning_rate: Vec<f64>,
    #[serde(default)]
    pub dropout: Vec<f64>,
    #[serde(default)]
    pub hidden: Vec<usize>,
    #[serde(default)]
    pub alpha: Vec<f64>,
    #[serde(default)]
    pub tau: Vec<f64>,
    #[serde(default)]
    pub ablations: Vec<Ablations>,
}

fn or_base<T: Clone>(values: &[T], base: T) -> Vec<T> {
    if values.is_empty() {
        vec![base]
    } else {
        values.to_vec()
    }
}

impl Grid {
    pub fn expand(&self, base: &TrainConfig) -> Vec<TrainConfig> {
        let mut out = Vec::new();
        for lr in or_base(&self.learning_rate, base.learning_rate) {
            for dropout in or_base(&self.dropout, base.dropout) {
                for hidden in or_base(&self.hidden, base.hidden) {
                    for alpha in or_base(&self.alpha, base.alpha) {
                        for tau in or_base(&self.tau, base.tau) {
                            for ablations in or_base(&self.ablations, base.ablations) {
                                out.push(TrainConfig {
                                    learning_rate: lr,
                                    dropout,
                                    hidden,
                                    alpha,
                                    tau,
                                    ablations,
                                    ..base.clone()
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// Lexicographic order on (learning rate, dropout, hidden, alpha, tau, ablations).
pub fn config_order(a: &TrainConfig, b: &TrainConfig) -> Ordering {
    a.learning_rate
        .total_cmp(&b.learning_rate)
        .then(a.dropout.total_cmp(&b.dropout))
        .then(a.hidden.cmp(&b.hidden))
        .then(a.alpha.total_cmp(&b.alpha))
        .then(a.tau.total_cmp(&b.tau))
        .then(a.ablations.cmp(&b.ablations))
}

/// Index of the highest mean FS; equal FS goes to the smaller config.
pub fn select_best(candidates: &[(TrainConfig, GradedScores)]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, (cfg, s)) in candidates.iter().enumerate() {
        best = match best {
            None => Some(i),
            Some(j) => {
                let (bcfg, bs) = &candidates[j];
                match s.fs.total_cmp(&bs.fs) {
                    Ordering::Greater => Some(i),
                    Ordering::Equal if config_order(cfg, bcfg) == Ordering::Less => Some(i),
                    _ => Some(j),
                }
            }
        };
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSearchResult {
    pub candidates: Vec<(TrainConfig, GradedScores)>,
    pub best: usize,
}

impl GridSearchResult {
    pub fn best_config(&self) -> &TrainConfig {
        &self.candidates[self.best].0
    }
}

pub fn grid_search(
    users: &[UserTimeline],
    provider: &dyn EmbeddingProvider,
    base: &TrainConfig,
    grid: &Grid,
    k: usize,
) -> Result<GridSearchResult> {
    let configs = grid.expand(base);
    let mut candidates = Vec::with_capacity(configs.len());
    for cfg in configs {
        let cv = cross_validate(users, provider, &cfg, k)?;
        candidates.push((cfg, cv.mean));
    }
    let best = select_best(&candidates).ok_or_else(|| Error::invalid("empty grid"))?;
    Ok(GridSearchResult { candidates, best })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParam {
    L,
    Tau,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::L => "l",
            SweepParam::Tau => "tau",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "l" => Ok(SweepParam::L),
            "tau" => Ok(SweepParam::Tau),
            other => Err(Error::invalid(format!("unknown sweep parameter \"{other}\" (expected l or tau)"))),
        }
    }

    /// `config` with this parameter set to `value`.
    pub fn apply(self, config: &TrainConfig, value: f64) -> Result<TrainConfig> {
        let mut cfg = config.clone();
        match self {
            SweepParam::L => {
                if !(value >= 1.0 && libm::trunc(value) == value) {
                    return Err(Error::invalid(format!("l must be a positive integer, got {value}")));
                }
                cfg.l = value as usize;
            }
            SweepParam::Tau => cfg.tau = value,
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    /// Windows in the whole corpus at this setting.
    pub windows: usize,
    pub scores: GradedScores,
}

pub fn sweep(
    users: &[UserTimeline],
    provider: &dyn EmbeddingProvider,
    config: &TrainConfig,
    param: SweepParam,
    values: &[f64],
    k: usize,
) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::invalid("sweep needs at least one value"));
    }
    let mut rows = Vec::with_capacity(values.len());
    for &value in values {
        let cfg = param.apply(config, value)?;
        let windows: usize = users.iter().map(|u| build_windows(u, cfg.l).map(|w| w.len())).sum::<Result<_>>()?;
        let cv = cross_validate(users, provider, &cfg, k)?;
        rows.push(SweepRow { value, windows, scores: cv.mean });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_sigma_halves_the_sum() {
        let l = LossBundle { sr: 1.0, pf: 2.0, rf: 3.0, df: 4.0 };
        let t = total_loss(&l, &UncertaintyWeights::default(), &Ablations::default());
        assert!((t - 5.0).abs() < 1e-12);
        let no_df = Ablations { disable_df: true, ..Default::default() };
        assert!((total_loss(&l, &UncertaintyWeights::default(), &no_df) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn grid_expands_and_keeps_base() {
        let base = TrainConfig::default();
        let g = Grid { tau: vec![0.2, 0.4], learning_rate: vec![1e-3, 5e-3], ..Default::default() };
        let e = g.expand(&base);
        assert_eq!(e.len(), 4);
        assert!(e.iter().all(|c| c.hidden == base.hidden));
        assert_eq!(Grid::default().expand(&base), vec![base]);
    }

    #[test]
    fn config_parses_with_defaults() {
        let cfg: TrainConfig = serde_json::from_str("{\"tau\": 0.8}").unwrap();
        assert_eq!(cfg.tau, 0.8);
        assert_eq!(cfg.l, 4);
        assert_eq!(cfg.patience, 10);
        assert!(serde_json::from_str::<TrainConfig>("{\"bogus\": 1}").is_err());
    }

    #[test]
    fn validation_split_sizes() {
        let users: Vec<UserTimeline> = (0..20)
            .map(|i| UserTimeline { user_id: format!("u{i}"), posts: Vec::new() })
            .collect();
        let (t, v) = validation_split(&users, 0.1, 3);
        assert_eq!((t.len(), v.len()), (18, 2));
        let (t, v) = validation_split(&users[..3], 0.1, 3);
        assert_eq!((t.len(), v.len()), (2, 1));
        let (t, v) = validation_split(&users[..1], 0.1, 3);
        assert_eq!((t.len(), v.len()), (1, 0));
        let (_, v) = validation_split(&users, 0.0, 3);
        assert!(v.is_empty());
    }

    #[test]
    fn invalid_configs() {
        let bad = [
            TrainConfig { l: 0, ..Default::default() },
            TrainConfig { tau: 0.0, ..Default::default() },
            TrainConfig { patience: 0, ..Default::default() },
            TrainConfig { dropout: 1.0, ..Default::default() },
            TrainConfig { hidden: 0, ..Default::default() },
        ];
        for c in bad {
            assert!(matches!(c.validate(), Err(Error::InvalidArgument(_))), "{c:?}");
        }
    }
}
