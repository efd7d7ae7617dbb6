//! Multi-task decoder: per-post risk/protective factor heads, effectiveness
//! flags, factor-state alignment, the dynamic integration loss and the
//! ordinal risk head trained against soft ordinal (SORD) targets.
//!
//! Orientation: `e_minus` is the risk-factor embedding, `e_plus` the
//! protective-factor embedding.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::catalog::{RiskLevel, N_LEVELS, N_PROTECTIVE_FACTORS, N_RISK_FACTORS};
use crate::linalg::Linear;
use crate::math::{self, clamped_ln, relu, sigmoid, LOG_EPS};

/// Two ReLU layers producing a factor embedding, then a linear logit map.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorHead {
    pub input: Linear,
    pub hidden: Linear,
    pub output: Linear,
}

impl FactorHead {
    pub fn zeros(inputs: usize, hidden: usize, embed: usize, labels: usize) -> Self {
        FactorHead {
            input: Linear::zeros(inputs, hidden),
            hidden: Linear::zeros(hidden, embed),
            output: Linear::zeros(embed, labels),
        }
    }

    pub fn init<R: Rng>(inputs: usize, hidden: usize, embed: usize, labels: usize, rng: &mut R) -> Self {
        FactorHead {
            input: Linear::init(inputs, hidden, rng),
            hidden: Linear::init(hidden, embed, rng),
            output: Linear::init(embed, labels, rng),
        }
    }

    pub fn forward(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let t = self.forward_trace(x, None::<(&mut rand_chacha::ChaCha8Rng, f64)>);
        (t.embedding, t.logits)
    }

    pub(crate) fn forward_trace<R: Rng>(&self, x: &[f64], dropout: Option<(&mut R, f64)>) -> HeadTrace {
        let pre1 = self.input.forward(x);
        let mut act1: Vec<f64> = pre1.iter().map(|v| relu(*v)).collect();
        let mask = apply_dropout(&mut act1, dropout);
        let pre2 = self.hidden.forward(&act1);
        let embedding: Vec<f64> = pre2.iter().map(|v| relu(*v)).collect();
        let logits = self.output.forward(&embedding);
        HeadTrace { pre1, act1, mask, pre2, embedding, logits }
    }

    /// Gradients from the logits and (optionally) directly from the embedding.
    pub(crate) fn backward(
        &self,
        x: &[f64],
        trace: &HeadTrace,
        d_logits: &[f64],
        d_embedding: Option<&[f64]>,
        grad: &mut FactorHead,
    ) {
        let mut d_emb = vec![0.0; trace.embedding.len()];
        self.output.backward(&trace.embedding, d_logits, &mut grad.output, Some(&mut d_emb));
        if let Some(extra) = d_embedding {
            for (d, e) in d_emb.iter_mut().zip(extra) {
                *d += e;
            }
        }
        relu_backward(&trace.pre2, &mut d_emb);
        let mut d_act1 = vec![0.0; trace.act1.len()];
        self.hidden.backward(&trace.act1, &d_emb, &mut grad.hidden, Some(&mut d_act1));
        if let Some(mask) = &trace.mask {
            for (d, m) in d_act1.iter_mut().zip(mask) {
                *d *= m;
            }
        }
        relu_backward(&trace.pre1, &mut d_act1);
        self.input.backward(x, &d_act1, &mut grad.input, None);
    }
}

#[derive(Debug, Clone)]
pub(crate) struct HeadTrace {
    pre1: Vec<f64>,
    act1: Vec<f64>,
    mask: Option<Vec<f64>>,
    pre2: Vec<f64>,
    pub embedding: Vec<f64>,
    pub logits: Vec<f64>,
}

/// Inverted dropout; returns the scaling mask when applied.
fn apply_dropout<R: Rng>(act: &mut [f64], dropout: Option<(&mut R, f64)>) -> Option<Vec<f64>> {
    let (rng, rate) = dropout?;
    if rate <= 0.0 {
        return None;
    }
    let keep = 1.0 / (1.0 - rate);
    let mask: Vec<f64> = act
        .iter()
        .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
        .collect();
    for (a, m) in act.iter_mut().zip(&mask) {
        *a *= m;
    }
    Some(mask)
}

fn relu_backward(pre: &[f64], d: &mut [f64]) {
    for (dv, p) in d.iter_mut().zip(pre) {
        if *p <= 0.0 {
            *dv = 0.0;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderParams {
    /// f3, f2, f4
    pub risk_factors: FactorHead,
    /// f6, f5, f7
    pub protective_factors: FactorHead,
    /// f9
    pub risk_hidden: Linear,
    /// f8
    pub risk_output: Linear,
}

impl DecoderParams {
    /// `embed` is the width of the factor embeddings and must equal the
    /// width of the pooled sequence vector.
    pub fn zeros(inputs: usize, factor_hidden: usize, embed: usize, risk_hidden: usize) -> Self {
        DecoderParams {
            risk_factors: FactorHead::zeros(inputs, factor_hidden, embed, N_RISK_FACTORS),
            protective_factors: FactorHead::zeros(inputs, factor_hidden, embed, N_PROTECTIVE_FACTORS),
            risk_hidden: Linear::zeros(embed, risk_hidden),
            risk_output: Linear::zeros(risk_hidden, N_LEVELS),
        }
    }

    pub fn init<R: Rng>(
        inputs: usize,
        factor_hidden: usize,
        embed: usize,
        risk_hidden: usize,
        rng: &mut R,
    ) -> Self {
        DecoderParams {
            risk_factors: FactorHead::init(inputs, factor_hidden, embed, N_RISK_FACTORS, rng),
            protective_factors: FactorHead::init(inputs, factor_hidden, embed, N_PROTECTIVE_FACTORS, rng),
            risk_hidden: Linear::init(embed, risk_hidden, rng),
            risk_output: Linear::init(risk_hidden, N_LEVELS, rng),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactorPrediction {
    pub e_minus: Vec<f64>,
    pub e_plus: Vec<f64>,
    pub rf_logits: Vec<f64>,
    pub pf_logits: Vec<f64>,
}

pub fn factor_heads(e: &[f64], params: &DecoderParams) -> FactorPrediction {
    let (e_minus, rf_logits) = params.risk_factors.forward(e);
    let (e_plus, pf_logits) = params.protective_factors.forward(e);
    FactorPrediction { e_minus, e_plus, rf_logits, pf_logits }
}

/// Binary cross-entropy on `sigmoid(logit)` with each log argument clamped
/// below at `eps`; returns the loss and its derivative with respect to the
/// logit.
pub fn bce_with_logit(logit: f64, label: f64) -> (f64, f64) {
    let cap = -math::ln(LOG_EPS);
    let p = sigmoid(logit);
    // -ln p and -ln(1 - p) in overflow-free form.
    let nlp = softplus(-logit);
    let nlq = softplus(logit);
    let (lp, gp) = if nlp < cap { (nlp, p - 1.0) } else { (cap, 0.0) };
    let (lq, gq) = if nlq < cap { (nlq, p) } else { (cap, 0.0) };
    (label * lp + (1.0 - label) * lq, label * gp + (1.0 - label) * gq)
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + libm::log1p(math::exp(-x.abs()))
}

/// Summed multi-label BCE for one post: `(L_rf, L_pf)`.
pub fn factor_losses(rf_logits: &[f64], pf_logits: &[f64], y_rf: &[f64], y_pf: &[f64]) -> (f64, f64) {
    let sum = |logits: &[f64], y: &[f64]| -> f64 {
        logits.iter().zip(y).map(|(z, t)| bce_with_logit(*z, *t).0).sum()
    };
    (sum(rf_logits, y_rf), sum(pf_logits, y_pf))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EffectivenessFlags {
    /// Risk went down.
    pub protective: bool,
    /// Risk went up.
    pub risk: bool,
}

impl EffectivenessFlags {
    pub fn any(self) -> bool {
        self.protective || self.risk
    }
}

/// Flags for the move from the last observed level to the target level.
pub fn effectiveness(last: RiskLevel, target: RiskLevel) -> EffectivenessFlags {
    let delta = target.index() as i64 - last.index() as i64;
    EffectivenessFlags { protective: delta < 0, risk: delta > 0 }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignmentScores {
    pub protective: f64,
    pub risk: f64,
}

/// Cosine similarity; zero when either vector has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (math::norm(a), math::norm(b));
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    math::dot(a, b) / (na * nb)
}

/// Adds `scale * d cos(u, e) / du` to `du` and `scale * d cos / de` to `de`.
fn cosine_backward(u: &[f64], e: &[f64], scale: f64, du: &mut [f64], de: &mut [f64]) {
    let (nu, ne) = (math::norm(u), math::norm(e));
    if nu == 0.0 || ne == 0.0 || scale == 0.0 {
        return;
    }
    let c = math::dot(u, e) / (nu * ne);
    for i in 0..u.len() {
        du[i] += scale * (e[i] / (nu * ne) - c * u[i] / (nu * nu));
        de[i] += scale * (u[i] / (nu * ne) - c * e[i] / (ne * ne));
    }
}

#[derive(Debug, Clone)]
pub(crate) struct AlignmentTrace {
    pub scores: AlignmentScores,
    plus_weights: Vec<f64>,
    minus_weights: Vec<f64>,
}

/// Temperature-scaled share of similarity mass going to the protective
/// embeddings (`protective`) versus the risk embeddings (`risk`).
pub fn alignment(u: &[f64], e_plus: &[Vec<f64>], e_minus: &[Vec<f64>], tau: f64) -> AlignmentScores {
    alignment_trace(u, e_plus, e_minus, tau).scores
}

pub(crate) fn alignment_trace(
    u: &[f64],
    e_plus: &[Vec<f64>],
    e_minus: &[Vec<f64>],
    tau: f64,
) -> AlignmentTrace {
    let plus: Vec<f64> = e_plus.iter().map(|e| cosine(u, e) / tau).collect();
    let minus: Vec<f64> = e_minus.iter().map(|e| cosine(u, e) / tau).collect();
    // S_p = A / (A + B) = sigmoid(ln A - ln B)
    let x = math::log_sum_exp(&plus) - math::log_sum_exp(&minus);
    let protective = sigmoid(x);
    let risk = sigmoid(-x);
    AlignmentTrace {
        scores: AlignmentScores { protective, risk },
        plus_weights: math::softmax(&plus),
        minus_weights: math::softmax(&minus),
    }
}

/// Backpropagate `d(loss)/d(logit of S_p)` into `u` and the factor embeddings.
pub(crate) fn alignment_backward(
    u: &[f64],
    e_plus: &[Vec<f64>],
    e_minus: &[Vec<f64>],
    tau: f64,
    trace: &AlignmentTrace,
    d_logit: f64,
    du: &mut [f64],
    de_plus: &mut [Vec<f64>],
    de_minus: &mut [Vec<f64>],
) {
    for (t, e) in e_plus.iter().enumerate() {
        let scale = d_logit * trace.plus_weights[t] / tau;
        cosine_backward(u, e, scale, du, &mut de_plus[t]);
    }
    for (t, e) in e_minus.iter().enumerate() {
        let scale = -d_logit * trace.minus_weights[t] / tau;
        cosine_backward(u, e, scale, du, &mut de_minus[t]);
    }
}

/// One sequence's dynamic-integration term and its derivative with respect
/// to the logit of `S_p` (so `S_r = 1 - S_p` is respected exactly).
pub fn dynamic_term(flags: EffectivenessFlags, scores: AlignmentScores) -> (f64, f64) {
    let ep = if flags.protective { 1.0 } else { 0.0 };
    let er = if flags.risk { 1.0 } else { 0.0 };
    let sp = scores.protective;
    let sr = scores.risk;
    let loss = 0.5
        * (-ep * clamped_ln(sp) - (1.0 - ep) * clamped_ln(1.0 - sp) - er * clamped_ln(sr)
            - (1.0 - er) * clamped_ln(1.0 - sr));
    // d/dS_p with each log term frozen when its argument is clamped
    let live = |p: f64| p > LOG_EPS;
    let mut d_sp = 0.0;
    if live(sp) {
        d_sp += -ep / sp;
    }
    if live(1.0 - sp) {
        d_sp += (1.0 - ep) / (1.0 - sp);
    }
    if live(sr) {
        d_sp += er / sr;
    }
    if live(1.0 - sr) {
        d_sp -= (1.0 - er) / (1.0 - sr);
    }
    (loss, 0.5 * d_sp * sp * sr)
}

/// Mean of the dynamic term over sequences with a risk change; 0 if none.
pub fn dynamic_loss(items: &[(EffectivenessFlags, AlignmentScores)]) -> f64 {
    let effective: Vec<f64> = items
        .iter()
        .filter(|(f, _)| f.any())
        .map(|(f, s)| dynamic_term(*f, *s).0)
        .collect();
    if effective.is_empty() {
        0.0
    } else {
        effective.iter().sum::<f64>() / effective.len() as f64
    }
}

#[derive(Debug, Clone)]
pub(crate) struct RiskHeadTrace {
    pre: Vec<f64>,
    act: Vec<f64>,
    mask: Option<Vec<f64>>,
    pub logits: Vec<f64>,
}

pub fn risk_head(u: &[f64], params: &DecoderParams) -> [f64; N_LEVELS] {
    let t = risk_head_trace(u, params, None::<(&mut rand_chacha::ChaCha8Rng, f64)>);
    [t.logits[0], t.logits[1], t.logits[2], t.logits[3]]
}

pub(crate) fn risk_head_trace<R: Rng>(
    u: &[f64],
    params: &DecoderParams,
    dropout: Option<(&mut R, f64)>,
) -> RiskHeadTrace {
    let pre = params.risk_hidden.forward(u);
    let mut act: Vec<f64> = pre.iter().map(|v| relu(*v)).collect();
    let mask = apply_dropout(&mut act, dropout);
    let logits = params.risk_output.forward(&act);
    RiskHeadTrace { pre, act, mask, logits }
}

pub(crate) fn risk_head_backward(
    u: &[f64],
    params: &DecoderParams,
    trace: &RiskHeadTrace,
    d_logits: &[f64],
    grad: &mut DecoderParams,
    du: &mut [f64],
) {
    let mut d_act = vec![0.0; trace.act.len()];
    params
        .risk_output
        .backward(&trace.act, d_logits, &mut grad.risk_output, Some(&mut d_act));
    if let Some(mask) = &trace.mask {
        for (d, m) in d_act.iter_mut().zip(mask) {
            *d *= m;
        }
    }
    relu_backward(&trace.pre, &mut d_act);
    params.risk_hidden.backward(u, &d_act, &mut grad.risk_hidden, Some(du));
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SordTargets(pub [f64; N_LEVELS]);

/// `softmax(-alpha * |k_true - k|)` over the four levels.
pub fn sord_targets(k_true: RiskLevel, alpha: f64) -> SordTargets {
    let mut neg = [0.0; N_LEVELS];
    for (k, v) in neg.iter_mut().enumerate() {
        *v = -alpha * (k as f64 - k_true.index() as f64).abs();
    }
    let mut out = [0.0; N_LEVELS];
    math::softmax_into(&neg, &mut out);
    SordTargets(out)
}

/// Cross-entropy of the model's softmax against the SORD targets, with
/// `d(loss)/d(logits)`. Log-probabilities are clamped at `ln(eps)`.
pub fn risk_loss_with_grad(logits: &[f64], k_true: RiskLevel, alpha: f64) -> (f64, [f64; N_LEVELS]) {
    let targets = sord_targets(k_true, alpha).0;
    let lse = math::log_sum_exp(logits);
    let floor = math::ln(LOG_EPS);
    let mut loss = 0.0;
    let mut live_mass = 0.0;
    let mut live = [false; N_LEVELS];
    for j in 0..N_LEVELS {
        let lp = logits[j] - lse;
        if lp > floor {
            live[j] = true;
            live_mass += targets[j];
            loss -= targets[j] * lp;
        } else {
            loss -= targets[j] * floor;
        }
    }
    let mut grad = [0.0; N_LEVELS];
    for k in 0..N_LEVELS {
        let p = math::exp(logits[k] - lse);
        grad[k] = p * live_mass - if live[k] { targets[k] } else { 0.0 };
    }
    (loss, grad)
}

pub fn risk_loss(logits: &[f64], k_true: RiskLevel, alpha: f64) -> f64 {
    risk_loss_with_grad(logits, k_true, alpha).0
}

/// Per-task losses of one batch.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct LossBundle {
    pub sr: f64,
    pub pf: f64,
    pub rf: f64,
    pub df: f64,
}

impl LossBundle {
    /// Task order used by the uncertainty weights: sr, pf, rf, df.
    pub fn as_array(&self) -> [f64; 4] {
        [self.sr, self.pf, self.rf, self.df]
    }

    pub fn is_finite(&self) -> bool {
        self.as_array().iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;

    #[test]
    fn zero_heads_give_zero_outputs() {
        let p = DecoderParams::zeros(64, 8, 6, 5);
        let f = factor_heads(&[0.0; 64], &p);
        assert_eq!(f.e_minus.len(), 6);
        assert_eq!(f.rf_logits.len(), 19);
        assert_eq!(f.pf_logits.len(), 5);
        assert!(f.rf_logits.iter().chain(&f.pf_logits).chain(&f.e_plus).all(|v| *v == 0.0));
        assert_eq!(risk_head(&[0.0; 6], &p), [0.0; 4]);
    }

    #[test]
    fn factor_head_hand_evaluation() {
        let mut p = DecoderParams::zeros(2, 2, 2, 2);
        p.risk_factors.input.weight = Matrix::from_vec(2, 2, vec![1.0, -1.0, 2.0, 0.5]);
        p.risk_factors.input.bias = vec![0.0, -1.0];
        p.risk_factors.hidden.weight = Matrix::from_vec(2, 2, vec![1.0, 1.0, -1.0, 0.0]);
        p.risk_factors.hidden.bias = vec![0.5, 0.0];
        // x = (1, 2): layer1 = relu(-1, 2) = (0, 2); layer2 = relu(2.5, 0) = (2.5, 0)
        let f = factor_heads(&[1.0, 2.0], &p);
        assert_eq!(f.e_minus, [2.5, 0.0]);
    }

    #[test]
    fn risk_head_hand_evaluation() {
        let mut p = DecoderParams::zeros(2, 2, 2, 2);
        p.risk_hidden.weight = Matrix::from_vec(2, 2, vec![1.0, 2.0, -3.0, 1.0]);
        p.risk_output.weight = Matrix::from_vec(4, 2, vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0, -1.0, 0.0]);
        p.risk_output.bias = vec![0.0, 0.0, 0.0, 0.5];
        // u = (1, 1): hidden = relu(3, -2) = (3, 0)
        assert_eq!(risk_head(&[1.0, 1.0], &p), [3.0, 0.0, 3.0, -2.5]);
    }

    #[test]
    fn bce_closed_forms() {
        let (l, _) = factor_losses(&[0.0; 19], &[0.0; 5], &[1.0; 19], &[0.0; 5]);
        assert!((l - 19.0 * core::f64::consts::LN_2).abs() < 1e-12);
        let (one, _) = bce_with_logit(libm::log(3.0), 1.0);
        assert!((one + libm::log(0.75)).abs() < 1e-12);
        let (good, _) = bce_with_logit(20.0, 1.0);
        let (good0, _) = bce_with_logit(-20.0, 0.0);
        assert!(good < 1e-7 && good0 < 1e-7);
    }

    #[test]
    fn effectiveness_cases() {
        use RiskLevel::*;
        assert_eq!(effectiveness(Attempt, Ideation), EffectivenessFlags { protective: true, risk: false });
        assert_eq!(effectiveness(Indicator, Indicator), EffectivenessFlags::default());
        assert_eq!(effectiveness(Indicator, Behavior), EffectivenessFlags { protective: false, risk: true });
    }

    #[test]
    fn alignment_cases() {
        let u = vec![1.0, 0.0];
        let same = vec![vec![0.3, 0.7]];
        let s = alignment(&u, &same, &same, 0.4);
        assert!((s.protective - 0.5).abs() < 1e-12);
        let s = alignment(&u, &[vec![2.0, 0.0]], &[vec![0.0, 1.0]], 1.0);
        let e = core::f64::consts::E;
        assert!((s.protective - e / (e + 1.0)).abs() < 1e-12);
        assert!((s.protective + s.risk - 1.0).abs() < 1e-12);
        let s = alignment(&u, &[vec![2.0, 0.0]], &[vec![-1.0, 0.0]], 1e9);
        assert!((s.protective - 0.5).abs() < 1e-8);
        // zero-norm embedding counts as similarity 0
        let s = alignment(&u, &[vec![0.0, 0.0]], &[vec![0.0, 5.0]], 0.4);
        assert!((s.protective - 0.5).abs() < 1e-12);
    }

    #[test]
    fn dynamic_loss_cases() {
        assert_eq!(dynamic_loss(&[(EffectivenessFlags::default(), AlignmentScores { protective: 0.9, risk: 0.1 })]), 0.0);
        let e = core::f64::consts::E;
        let sp = e / (e + 1.0);
        let flags = EffectivenessFlags { protective: true, risk: false };
        let l = dynamic_loss(&[(flags, AlignmentScores { protective: sp, risk: 1.0 - sp })]);
        assert!((l + libm::log(sp)).abs() < 1e-12);
        let near = dynamic_loss(&[(flags, AlignmentScores { protective: 1.0 - 1e-12, risk: 1e-12 })]);
        assert!(near < 1e-6);
    }

    #[test]
    fn sord_cases() {
        let t = sord_targets(RiskLevel::Behavior, 1.0).0;
        let expected = [0.0723, 0.1966, 0.5344, 0.1966];
        for (a, b) in t.iter().zip(expected) {
            assert!((a - b).abs() < 1e-4, "{t:?}");
        }
        assert_eq!(sord_targets(RiskLevel::Attempt, 0.0).0, [0.25; 4]);
        assert!(sord_targets(RiskLevel::Indicator, 100.0).0[0] > 1.0 - 1e-9);
    }

    #[test]
    fn risk_loss_cases() {
        let uniform = risk_loss(&[0.0; 4], RiskLevel::Behavior, 1.0);
        assert!((uniform - libm::log(4.0)).abs() < 1e-12);
        let t = sord_targets(RiskLevel::Ideation, 1.3).0;
        let logits: Vec<f64> = t.iter().map(|p| libm::log(*p)).collect();
        let entropy: f64 = -t.iter().map(|p| p * libm::log(*p)).sum::<f64>();
        let (at_opt, grad) = risk_loss_with_grad(&logits, RiskLevel::Ideation, 1.3);
        assert!((at_opt - entropy).abs() < 1e-12);
        assert!(grad.iter().all(|g| g.abs() < 1e-12));
        // large alpha reduces to one-hot cross-entropy
        let logits = [0.3, -0.2, 1.0, 0.1];
        let one_hot = -(logits[2] - math::log_sum_exp(&logits));
        assert!((risk_loss(&logits, RiskLevel::Behavior, 60.0) - one_hot).abs() < 1e-12);
    }
}
