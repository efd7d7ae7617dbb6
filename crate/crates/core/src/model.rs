//! Full model: parameters, per-window forward pass, and the batch objective
//! with its analytic gradient.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::{FactorKind, RiskLevel, N_LEVELS};
use crate::corpus::LabeledWindow;
use crate::decoder::{
    self, alignment_backward, alignment_trace, bce_with_logit, dynamic_term, effectiveness,
    risk_head_backward, risk_head_trace, risk_loss_with_grad, AlignmentScores, DecoderParams,
    EffectivenessFlags, FactorPrediction, LossBundle,
};
use crate::embedding::EmbeddingProvider;
use crate::encoder::{encode, encode_backward, EncoderParams, SequenceEncoding};
use crate::linalg::Matrix;
use crate::math;
use crate::trainer::UncertaintyWeights;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    /// Post embedding width.
    pub embed: usize,
    /// LSTM hidden size per direction; pooled and factor embeddings are `2 * hidden`.
    pub hidden: usize,
    pub attention: usize,
    pub factor_hidden: usize,
    pub risk_hidden: usize,
}

impl ModelDims {
    pub fn state_dim(&self) -> usize {
        2 * self.hidden
    }

    pub fn validate(&self) -> Result<()> {
        let d = [self.embed, self.hidden, self.attention, self.factor_hidden, self.risk_hidden];
        if d.iter().any(|v| *v == 0) {
            return Err(Error::invalid(format!("all model dimensions must be positive: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParameters {
    pub encoder: EncoderParams,
    pub decoder: DecoderParams,
    pub uncertainty: UncertaintyWeights,
}

/// Name, shape and storage of one parameter tensor.
pub struct TensorView<'a> {
    pub name: &'static str,
    pub shape: (usize, usize),
    pub data: &'a [f64],
}

pub struct TensorViewMut<'a> {
    pub name: &'static str,
    pub shape: (usize, usize),
    pub data: &'a mut [f64],
}

macro_rules! tensor_table {
    ($p:expr, $mat:ident, $vec:ident, $scalar:ident) => {
        [
            $mat!("encoder.forward.input", $p.encoder.forward.input),
            $mat!("encoder.forward.recurrent", $p.encoder.forward.recurrent),
            $vec!("encoder.forward.bias", $p.encoder.forward.bias),
            $mat!("encoder.backward.input", $p.encoder.backward.input),
            $mat!("encoder.backward.recurrent", $p.encoder.backward.recurrent),
            $vec!("encoder.backward.bias", $p.encoder.backward.bias),
            $scalar!("encoder.theta", $p.encoder.theta),
            $scalar!("encoder.mu", $p.encoder.mu),
            $mat!("encoder.attention.weight", $p.encoder.attention.weight),
            $vec!("encoder.attention.bias", $p.encoder.attention.bias),
            $vec!("encoder.attention_proj", $p.encoder.attention_proj),
            $mat!("decoder.risk_factors.input.weight", $p.decoder.risk_factors.input.weight),
            $vec!("decoder.risk_factors.input.bias", $p.decoder.risk_factors.input.bias),
            $mat!("decoder.risk_factors.hidden.weight", $p.decoder.risk_factors.hidden.weight),
            $vec!("decoder.risk_factors.hidden.bias", $p.decoder.risk_factors.hidden.bias),
            $mat!("decoder.risk_factors.output.weight", $p.decoder.risk_factors.output.weight),
            $vec!("decoder.risk_factors.output.bias", $p.decoder.risk_factors.output.bias),
            $mat!("decoder.protective_factors.input.weight", $p.decoder.protective_factors.input.weight),
            $vec!("decoder.protective_factors.input.bias", $p.decoder.protective_factors.input.bias),
            $mat!("decoder.protective_factors.hidden.weight", $p.decoder.protective_factors.hidden.weight),
            $vec!("decoder.protective_factors.hidden.bias", $p.decoder.protective_factors.hidden.bias),
            $mat!("decoder.protective_factors.output.weight", $p.decoder.protective_factors.output.weight),
            $vec!("decoder.protective_factors.output.bias", $p.decoder.protective_factors.output.bias),
            $mat!("decoder.risk_hidden.weight", $p.decoder.risk_hidden.weight),
            $vec!("decoder.risk_hidden.bias", $p.decoder.risk_hidden.bias),
            $mat!("decoder.risk_output.weight", $p.decoder.risk_output.weight),
            $vec!("decoder.risk_output.bias", $p.decoder.risk_output.bias),
            $vec!("uncertainty.log_sigma", $p.uncertainty.log_sigma),
        ]
    };
}

macro_rules! mat_ref {
    ($n:expr, $m:expr) => {
        TensorView { name: $n, shape: $m.shape(), data: $m.as_slice() }
    };
}
macro_rules! vec_ref {
    ($n:expr, $v:expr) => {
        TensorView { name: $n, shape: ($v.len(), 1), data: &$v[..] }
    };
}
macro_rules! scalar_ref {
    ($n:expr, $s:expr) => {
        TensorView { name: $n, shape: (1, 1), data: core::slice::from_ref(&$s) }
    };
}
macro_rules! mat_mut {
    ($n:expr, $m:expr) => {
        TensorViewMut { name: $n, shape: $m.shape(), data: $m.as_mut_slice() }
    };
}
macro_rules! vec_mut {
    ($n:expr, $v:expr) => {
        TensorViewMut { name: $n, shape: ($v.len(), 1), data: &mut $v[..] }
    };
}
macro_rules! scalar_mut {
    ($n:expr, $s:expr) => {
        TensorViewMut { name: $n, shape: (1, 1), data: core::slice::from_mut(&mut $s) }
    };
}

impl ModelParameters {
    pub fn init(dims: ModelDims, seed: u64) -> Result<Self> {
        dims.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoder = EncoderParams::init(dims.embed, dims.hidden, dims.attention, &mut rng);
        let decoder = DecoderParams::init(
            dims.embed,
            dims.factor_hidden,
            dims.state_dim(),
            dims.risk_hidden,
            &mut rng,
        );
        Ok(ModelParameters { encoder, decoder, uncertainty: UncertaintyWeights::default() })
    }

    pub fn zeros(dims: ModelDims) -> Self {
        ModelParameters {
            encoder: EncoderParams::zeros(dims.embed, dims.hidden, dims.attention),
            decoder: DecoderParams::zeros(dims.embed, dims.factor_hidden, dims.state_dim(), dims.risk_hidden),
            uncertainty: UncertaintyWeights::default(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        ModelParameters::zeros(self.dims())
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims {
            embed: self.encoder.forward.inputs(),
            hidden: self.encoder.hidden(),
            attention: self.encoder.attention.outputs(),
            factor_hidden: self.decoder.risk_factors.input.outputs(),
            risk_hidden: self.decoder.risk_hidden.outputs(),
        }
    }

    /// Every learnable tensor, in serialization order.
    pub fn tensors(&self) -> [TensorView<'_>; 28] {
        tensor_table!(self, mat_ref, vec_ref, scalar_ref)
    }

    pub fn tensors_mut(&mut self) -> [TensorViewMut<'_>; 28] {
        tensor_table!(self, mat_mut, vec_mut, scalar_mut)
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for t in self.tensors() {
            out.extend_from_slice(t.data);
        }
        out
    }

    pub fn assign_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_params(), "flat parameter length");
        let mut offset = 0;
        for t in self.tensors_mut() {
            let n = t.data.len();
            t.data.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
    }

    /// Flat index ranges of each named tensor.
    pub fn tensor_ranges(&self) -> Vec<(&'static str, core::ops::Range<usize>)> {
        let mut offset = 0;
        self.tensors()
            .iter()
            .map(|t| {
                let r = offset..offset + t.data.len();
                offset = r.end;
                (t.name, r)
            })
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }
}

/// A window with its post embeddings and labels materialized.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedWindow {
    pub user_id: String,
    pub post_ids: Vec<String>,
    pub timestamps: Vec<i64>,
    pub target_post_id: String,
    /// `l x d_e` post embeddings.
    pub inputs: Matrix,
    pub delta_days: Vec<f64>,
    pub rf_labels: Vec<Vec<f64>>,
    pub pf_labels: Vec<Vec<f64>>,
    pub last_level: RiskLevel,
    pub target_level: RiskLevel,
}

impl EncodedWindow {
    pub fn new(window: &LabeledWindow, provider: &dyn EmbeddingProvider) -> Result<Self> {
        if window.observed.is_empty() {
            return Err(Error::invalid("window has no observed posts"));
        }
        let d = provider.dim();
        let mut inputs = Matrix::zeros(window.observed.len(), d);
        for (t, post) in window.observed.iter().enumerate() {
            let e = provider.embed(&post.post_id, &post.text)?;
            if e.dim() != d {
                return Err(Error::Format(format!(
                    "embedding of {} has width {}, expected {d}",
                    post.post_id,
                    e.dim()
                )));
            }
            inputs.row_mut(t).copy_from_slice(e.as_slice());
        }
        Ok(EncodedWindow {
            user_id: window.user_id.clone(),
            post_ids: window.observed.iter().map(|p| p.post_id.clone()).collect(),
            timestamps: window.observed.iter().map(|p| p.timestamp).collect(),
            target_post_id: window.target_post_id.clone(),
            inputs,
            delta_days: window.delta_days.clone(),
            rf_labels: window
                .observed
                .iter()
                .map(|p| p.risk_factors.indicator(FactorKind::Risk))
                .collect(),
            pf_labels: window
                .observed
                .iter()
                .map(|p| p.protective_factors.indicator(FactorKind::Protective))
                .collect(),
            last_level: window.last_level(),
            target_level: window.target_level,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.rows() == 0
    }

    pub fn flags(&self) -> EffectivenessFlags {
        effectiveness(self.last_level, self.target_level)
    }
}

pub fn encode_windows(windows: &[LabeledWindow], provider: &dyn EmbeddingProvider) -> Result<Vec<EncodedWindow>> {
    windows.iter().map(|w| EncodedWindow::new(w, provider)).collect()
}

/// Tasks that can be switched off. A disabled task contributes neither its
/// loss nor its uncertainty regularizer to the objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct Ablations {
    #[serde(default)]
    pub disable_rf: bool,
    #[serde(default)]
    pub disable_pf: bool,
    #[serde(default)]
    pub disable_df: bool,
}

impl Ablations {
    /// Enabled flags in task order sr, pf, rf, df.
    pub fn enabled(&self) -> [bool; 4] {
        [true, !self.disable_pf, !self.disable_rf, !self.disable_df]
    }

    /// "full", "w/o RF", "w/o PF", "w/o DF" or a `+`-joined combination.
    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if self.disable_rf {
            parts.push("w/o RF");
        }
        if self.disable_pf {
            parts.push("w/o PF");
        }
        if self.disable_df {
            parts.push("w/o DF");
        }
        if parts.is_empty() {
            String::from("full")
        } else {
            parts.join("+")
        }
    }
}

/// Non-learned settings of the objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveSettings {
    pub tau: f64,
    pub alpha: f64,
    pub ablations: Ablations,
    /// Pool the decay-gated states instead of the raw states.
    pub pool_gated: bool,
    /// Applied only when a dropout RNG is supplied.
    pub dropout: f64,
}

impl Default for ObjectiveSettings {
    fn default() -> Self {
        ObjectiveSettings {
            tau: 0.4,
            alpha: 1.0,
            ablations: Ablations::default(),
            pool_gated: false,
            dropout: 0.0,
        }
    }
}

/// Deterministic (dropout-free) model outputs for one window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowOutput {
    pub encoding: SequenceEncoding,
    pub factors: Vec<FactorPrediction>,
    pub alignment: AlignmentScores,
    pub risk_logits: [f64; N_LEVELS],
    pub risk_probs: [f64; N_LEVELS],
}

pub fn forward_window(
    params: &ModelParameters,
    window: &EncodedWindow,
    settings: &ObjectiveSettings,
) -> Result<WindowOutput> {
    let trace = encode(&window.inputs, &window.delta_days, &params.encoder, settings.pool_gated)?;
    let factors: Vec<FactorPrediction> = (0..window.len())
        .map(|t| decoder::factor_heads(window.inputs.row(t), &params.decoder))
        .collect();
    let e_plus: Vec<Vec<f64>> = factors.iter().map(|f| f.e_plus.clone()).collect();
    let e_minus: Vec<Vec<f64>> = factors.iter().map(|f| f.e_minus.clone()).collect();
    let u = &trace.encoding.pooled;
    let alignment = decoder::alignment(u, &e_plus, &e_minus, settings.tau);
    let risk_logits = decoder::risk_head(u, &params.decoder);
    let mut risk_probs = [0.0; N_LEVELS];
    math::softmax_into(&risk_logits, &mut risk_probs);
    Ok(WindowOutput { encoding: trace.encoding, factors, alignment, risk_logits, risk_probs })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchEvaluation {
    pub losses: LossBundle,
    pub total: f64,
}

/// Batch losses and the uncertainty-weighted total; when `grad` is given,
/// `d(total)/d(params)` is ADDED to it.
///
/// `L_rf`/`L_pf` are summed over labels and averaged over posts and windows,
/// `L_sr` is averaged over windows, `L_df` over windows with a risk change.
pub fn batch_objective(
    params: &ModelParameters,
    windows: &[&EncodedWindow],
    settings: &ObjectiveSettings,
    mut dropout_rng: Option<&mut ChaCha8Rng>,
    mut grad: Option<&mut ModelParameters>,
) -> Result<BatchEvaluation> {
    if windows.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let n = windows.len() as f64;
    let n_effective = windows.iter().filter(|w| w.flags().any()).count();
    let enabled = settings.ablations.enabled();
    let weights = params.uncertainty.task_scales();
    // d(total)/d(L_k)
    let coef: [f64; 4] = core::array::from_fn(|k| if enabled[k] { weights[k] } else { 0.0 });
    let mut losses = LossBundle::default();

    for w in windows {
        let l = w.len();
        let trace = encode(&w.inputs, &w.delta_days, &params.encoder, settings.pool_gated)?;
        let u = &trace.encoding.pooled;
        let rate = settings.dropout;

        let mut rf_traces = Vec::with_capacity(l);
        let mut pf_traces = Vec::with_capacity(l);
        for t in 0..l {
            let x = w.inputs.row(t);
            rf_traces.push(params.decoder.risk_factors.forward_trace(x, dropout_rng.as_deref_mut().map(|r| (r, rate))));
            pf_traces.push(params.decoder.protective_factors.forward_trace(x, dropout_rng.as_deref_mut().map(|r| (r, rate))));
        }

        let post_scale = 1.0 / (n * l as f64);
        let mut d_rf_logits = Vec::with_capacity(l);
        let mut d_pf_logits = Vec::with_capacity(l);
        for t in 0..l {
            let mut d_rf = vec![0.0; rf_traces[t].logits.len()];
            for (j, (z, y)) in rf_traces[t].logits.iter().zip(&w.rf_labels[t]).enumerate() {
                let (loss, g) = bce_with_logit(*z, *y);
                losses.rf += loss * post_scale;
                d_rf[j] = g * post_scale * coef[2];
            }
            let mut d_pf = vec![0.0; pf_traces[t].logits.len()];
            for (j, (z, y)) in pf_traces[t].logits.iter().zip(&w.pf_labels[t]).enumerate() {
                let (loss, g) = bce_with_logit(*z, *y);
                losses.pf += loss * post_scale;
                d_pf[j] = g * post_scale * coef[1];
            }
            d_rf_logits.push(d_rf);
            d_pf_logits.push(d_pf);
        }

        let e_plus: Vec<Vec<f64>> = pf_traces.iter().map(|t| t.embedding.clone()).collect();
        let e_minus: Vec<Vec<f64>> = rf_traces.iter().map(|t| t.embedding.clone()).collect();
        let align = alignment_trace(u, &e_plus, &e_minus, settings.tau);
        let flags = w.flags();
        let mut d_align_logit = 0.0;
        if flags.any() {
            let (loss, d_logit) = dynamic_term(flags, align.scores);
            losses.df += loss / n_effective as f64;
            d_align_logit = d_logit * coef[3] / n_effective as f64;
        }

        let risk = risk_head_trace(u, &params.decoder, dropout_rng.as_deref_mut().map(|r| (r, rate)));
        let (loss_sr, d_risk) = risk_loss_with_grad(&risk.logits, w.target_level, settings.alpha);
        losses.sr += loss_sr / n;

        let Some(g) = grad.as_deref_mut() else { continue };
        let d_risk: Vec<f64> = d_risk.iter().map(|v| v * coef[0] / n).collect();
        let mut du = vec![0.0; u.len()];
        risk_head_backward(u, &params.decoder, &risk, &d_risk, &mut g.decoder, &mut du);
        let mut de_plus = vec![vec![0.0; u.len()]; l];
        let mut de_minus = vec![vec![0.0; u.len()]; l];
        if d_align_logit != 0.0 {
            alignment_backward(u, &e_plus, &e_minus, settings.tau, &align, d_align_logit, &mut du, &mut de_plus, &mut de_minus);
        }
        for t in 0..l {
            let x = w.inputs.row(t);
            params.decoder.risk_factors.backward(x, &rf_traces[t], &d_rf_logits[t], Some(&de_minus[t]), &mut g.decoder.risk_factors);
            params.decoder.protective_factors.backward(x, &pf_traces[t], &d_pf_logits[t], Some(&de_plus[t]), &mut g.decoder.protective_factors);
        }
        encode_backward(&w.inputs, &w.delta_days, &params.encoder, &trace, &du, &mut g.encoder);
    }

    let total = params.uncertainty.total_loss(&losses, &settings.ablations);
    if let Some(g) = grad {
        let task = losses.as_array();
        for k in 0..4 {
            if enabled[k] {
                // d/ds [L e^{-2s} / 2 + s]
                g.uncertainty.log_sigma[k] += 1.0 - 2.0 * weights[k] * task[k];
            }
        }
    }
    Ok(BatchEvaluation { losses, total })
}
