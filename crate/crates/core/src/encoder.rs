//! Temporal-aware sequence encoder.
//!
//! A bidirectional LSTM turns the post embeddings of a window into states
//! `H_t = [fwd_t, bwd_t]`. Each state is damped by a decay gate
//! `sigmoid(theta - mu * dt_t)` (with `dt_t` in days to the last post), the
//! damped state is scored by `w . tanh(W delta_t + b)`, and the softmax of
//! those energies over time pools the raw states into `u`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::linalg::{Linear, Matrix};
use crate::math::{sigmoid, tanh};
use crate::{Error, Result};

/// Gate order in the stacked pre-activations: input, forget, cell, output.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    /// `4h x d_in`
    pub input: Matrix,
    /// `4h x h`
    pub recurrent: Matrix,
    /// `4h`
    pub bias: Vec<f64>,
}

impl LstmParams {
    pub fn zeros(inputs: usize, hidden: usize) -> Self {
        LstmParams {
            input: Matrix::zeros(4 * hidden, inputs),
            recurrent: Matrix::zeros(4 * hidden, hidden),
            bias: vec![0.0; 4 * hidden],
        }
    }

    /// Uniform in `±1/sqrt(hidden)`.
    pub fn init<R: Rng>(inputs: usize, hidden: usize, rng: &mut R) -> Self {
        let bound = 1.0 / crate::math::sqrt(hidden as f64);
        LstmParams {
            input: Matrix::uniform(4 * hidden, inputs, bound, rng),
            recurrent: Matrix::uniform(4 * hidden, hidden, bound, rng),
            bias: (0..4 * hidden).map(|_| rng.gen_range(-bound..=bound)).collect(),
        }
    }

    pub fn hidden(&self) -> usize {
        self.recurrent.cols()
    }

    pub fn inputs(&self) -> usize {
        self.input.cols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub forward: LstmParams,
    pub backward: LstmParams,
    pub theta: f64,
    pub mu: f64,
    /// Hidden layer of the energy map, `d_a x 2h`.
    pub attention: Linear,
    /// Scalar projection of the energy map, `d_a`.
    pub attention_proj: Vec<f64>,
}

impl EncoderParams {
    pub fn zeros(inputs: usize, hidden: usize, attention: usize) -> Self {
        EncoderParams {
            forward: LstmParams::zeros(inputs, hidden),
            backward: LstmParams::zeros(inputs, hidden),
            theta: 0.0,
            mu: 0.0,
            attention: Linear::zeros(2 * hidden, attention),
            attention_proj: vec![0.0; attention],
        }
    }

    /// Random weights with `theta = 1`, `mu = 0.1`.
    pub fn init<R: Rng>(inputs: usize, hidden: usize, attention: usize, rng: &mut R) -> Self {
        let forward = LstmParams::init(inputs, hidden, rng);
        let backward = LstmParams::init(inputs, hidden, rng);
        let attention_layer = Linear::init(2 * hidden, attention, rng);
        let bound = 1.0 / crate::math::sqrt(attention as f64);
        let attention_proj = (0..attention).map(|_| rng.gen_range(-bound..=bound)).collect();
        EncoderParams {
            forward,
            backward,
            theta: 1.0,
            mu: 0.1,
            attention: attention_layer,
            attention_proj,
        }
    }

    pub fn hidden(&self) -> usize {
        self.forward.hidden()
    }

    /// Width of `H_t` and `u`.
    pub fn state_dim(&self) -> usize {
        2 * self.hidden()
    }
}

#[derive(Debug, Clone)]
struct LstmStep {
    gates: Vec<f64>,
    c: Vec<f64>,
    tanh_c: Vec<f64>,
    h: Vec<f64>,
}

/// Steps in processing order (reversed positions for the backward pass).
#[derive(Debug, Clone)]
struct LstmTrace {
    steps: Vec<LstmStep>,
    reverse: bool,
}

impl LstmTrace {
    fn position(&self, step: usize) -> usize {
        if self.reverse {
            self.steps.len() - 1 - step
        } else {
            step
        }
    }
}

fn lstm_run(p: &LstmParams, inputs: &Matrix, reverse: bool) -> LstmTrace {
    let h = p.hidden();
    let l = inputs.rows();
    let mut steps: Vec<LstmStep> = Vec::with_capacity(l);
    for s in 0..l {
        let t = trace_position(reverse, l, s);
        let mut z = p.bias.clone();
        p.input.matvec_acc(inputs.row(t), &mut z);
        if let Some(prev) = steps.last() {
            p.recurrent.matvec_acc(&prev.h, &mut z);
        }
        for (k, v) in z.iter_mut().enumerate() {
            *v = if (2 * h..3 * h).contains(&k) { tanh(*v) } else { sigmoid(*v) };
        }
        let mut c = vec![0.0; h];
        for j in 0..h {
            let c_prev = steps.last().map_or(0.0, |st| st.c[j]);
            c[j] = z[h + j] * c_prev + z[j] * z[2 * h + j];
        }
        let tanh_c: Vec<f64> = c.iter().map(|&v| tanh(v)).collect();
        let hv = (0..h).map(|j| z[3 * h + j] * tanh_c[j]).collect();
        steps.push(LstmStep { gates: z, c, tanh_c, h: hv });
    }
    LstmTrace { steps, reverse }
}

fn trace_position(reverse: bool, l: usize, step: usize) -> usize {
    if reverse {
        l - 1 - step
    } else {
        step
    }
}

/// Backpropagate `d_out` (rows by position, `h` columns) through one direction.
fn lstm_backward(
    p: &LstmParams,
    inputs: &Matrix,
    trace: &LstmTrace,
    d_out: &Matrix,
    grad: &mut LstmParams,
) {
    let h = p.hidden();
    let mut dh_next = vec![0.0; h];
    let mut dc_next = vec![0.0; h];
    let mut dz = vec![0.0; 4 * h];
    for s in (0..trace.steps.len()).rev() {
        let t = trace.position(s);
        let st = &trace.steps[s];
        let prev = if s > 0 { Some(&trace.steps[s - 1]) } else { None };
        for j in 0..h {
            let (i, f, g, o) = (st.gates[j], st.gates[h + j], st.gates[2 * h + j], st.gates[3 * h + j]);
            let dh = d_out.get(t, j) + dh_next[j];
            let d_o = dh * st.tanh_c[j];
            let dc = dh * o * (1.0 - st.tanh_c[j] * st.tanh_c[j]) + dc_next[j];
            let c_prev = prev.map_or(0.0, |pr| pr.c[j]);
            dz[j] = dc * g * i * (1.0 - i);
            dz[h + j] = dc * c_prev * f * (1.0 - f);
            dz[2 * h + j] = dc * i * (1.0 - g * g);
            dz[3 * h + j] = d_o * o * (1.0 - o);
            dc_next[j] = dc * f;
        }
        grad.input.outer_acc(&dz, inputs.row(t));
        for (b, d) in grad.bias.iter_mut().zip(&dz) {
            *b += d;
        }
        dh_next.iter_mut().for_each(|v| *v = 0.0);
        if let Some(pr) = prev {
            grad.recurrent.outer_acc(&dz, &pr.h);
            p.recurrent.t_matvec_acc(&dz, &mut dh_next);
        }
    }
}

fn check_inputs(inputs: &Matrix, params: &EncoderParams) -> Result<()> {
    if inputs.rows() == 0 {
        return Err(Error::invalid("sequence must contain at least one post"));
    }
    if inputs.cols() != params.forward.inputs() || inputs.cols() != params.backward.inputs() {
        return Err(Error::invalid(format!(
            "embedding width {} does not match encoder input width {}",
            inputs.cols(),
            params.forward.inputs()
        )));
    }
    if params.forward.hidden() != params.backward.hidden() {
        return Err(Error::invalid("forward and backward hidden sizes differ"));
    }
    Ok(())
}

/// Run both directions; returns `H` with shape `l x 2h`.
pub fn bilstm_encode(inputs: &Matrix, params: &EncoderParams) -> Result<Matrix> {
    check_inputs(inputs, params)?;
    let fwd = lstm_run(&params.forward, inputs, false);
    let bwd = lstm_run(&params.backward, inputs, true);
    Ok(assemble_states(&fwd, &bwd, params.hidden()))
}

fn assemble_states(fwd: &LstmTrace, bwd: &LstmTrace, h: usize) -> Matrix {
    let l = fwd.steps.len();
    let mut states = Matrix::zeros(l, 2 * h);
    for s in 0..l {
        let row = states.row_mut(fwd.position(s));
        row[..h].copy_from_slice(&fwd.steps[s].h);
    }
    for s in 0..l {
        let row = states.row_mut(bwd.position(s));
        row[h..].copy_from_slice(&bwd.steps[s].h);
    }
    states
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceEncoding {
    /// `H`, `l x 2h`.
    pub states: Matrix,
    /// Decay gates `sigmoid(theta - mu * dt_t)`.
    pub gates: Vec<f64>,
    pub energies: Vec<f64>,
    /// Softmax of the energies over time.
    pub attention: Vec<f64>,
    /// `u = sum_t a_t H_t` (or of the gated states when `pool_gated`).
    pub pooled: Vec<f64>,
}

#[derive(Debug, Clone)]
struct AttentionTrace {
    gated: Matrix,
    hidden: Matrix,
}

fn attention_forward(
    states: Matrix,
    delta_days: &[f64],
    params: &EncoderParams,
    pool_gated: bool,
) -> (SequenceEncoding, AttentionTrace) {
    let l = states.rows();
    let width = states.cols();
    let d_a = params.attention.outputs();
    let mut gates = Vec::with_capacity(l);
    let mut gated = Matrix::zeros(l, width);
    let mut hidden = Matrix::zeros(l, d_a);
    let mut energies = Vec::with_capacity(l);
    for t in 0..l {
        let g = sigmoid(params.theta - params.mu * delta_days[t]);
        gates.push(g);
        for (d, h) in gated.row_mut(t).iter_mut().zip(states.row(t)) {
            *d = g * h;
        }
        let mut s = params.attention.forward(gated.row(t));
        s.iter_mut().for_each(|v| *v = tanh(*v));
        energies.push(crate::math::dot(&s, &params.attention_proj));
        hidden.row_mut(t).copy_from_slice(&s);
    }
    let attention = crate::math::softmax(&energies);
    let pool_src = if pool_gated { &gated } else { &states };
    let mut pooled = vec![0.0; width];
    for t in 0..l {
        for (u, h) in pooled.iter_mut().zip(pool_src.row(t)) {
            *u += attention[t] * h;
        }
    }
    (
        SequenceEncoding { states, gates, energies, attention, pooled },
        AttentionTrace { gated, hidden },
    )
}

/// Decay-gated attention pooling over precomputed states.
pub fn temporal_attention(
    states: &Matrix,
    delta_days: &[f64],
    params: &EncoderParams,
    pool_gated: bool,
) -> Result<SequenceEncoding> {
    if delta_days.len() != states.rows() {
        return Err(Error::invalid(format!(
            "{} time deltas for {} states",
            delta_days.len(),
            states.rows()
        )));
    }
    if states.rows() == 0 || states.cols() != params.attention.inputs() {
        return Err(Error::invalid("state width does not match the attention layer"));
    }
    Ok(attention_forward(states.clone(), delta_days, params, pool_gated).0)
}

/// Everything the backward pass needs from one forward pass.
#[derive(Debug, Clone)]
pub struct EncoderTrace {
    fwd: LstmTrace,
    bwd: LstmTrace,
    attn: AttentionTrace,
    pub encoding: SequenceEncoding,
    pool_gated: bool,
}

pub fn encode(
    inputs: &Matrix,
    delta_days: &[f64],
    params: &EncoderParams,
    pool_gated: bool,
) -> Result<EncoderTrace> {
    check_inputs(inputs, params)?;
    if delta_days.len() != inputs.rows() {
        return Err(Error::invalid("one time delta per post is required"));
    }
    let fwd = lstm_run(&params.forward, inputs, false);
    let bwd = lstm_run(&params.backward, inputs, true);
    let states = assemble_states(&fwd, &bwd, params.hidden());
    let (encoding, attn) = attention_forward(states, delta_days, params, pool_gated);
    Ok(EncoderTrace { fwd, bwd, attn, encoding, pool_gated })
}

/// Accumulate `d(loss)/d(params)` given `d(loss)/du`.
pub fn encode_backward(
    inputs: &Matrix,
    delta_days: &[f64],
    params: &EncoderParams,
    trace: &EncoderTrace,
    d_pooled: &[f64],
    grad: &mut EncoderParams,
) {
    let enc = &trace.encoding;
    let l = enc.states.rows();
    let width = enc.states.cols();
    let h = params.hidden();
    let pool_src = if trace.pool_gated { &trace.attn.gated } else { &enc.states };

    let d_attn: Vec<f64> = (0..l).map(|t| crate::math::dot(d_pooled, pool_src.row(t))).collect();
    let mean: f64 = enc.attention.iter().zip(&d_attn).map(|(a, d)| a * d).sum();

    let mut d_states = Matrix::zeros(l, width);
    let mut d_gated = vec![0.0; width];
    let mut d_pre = vec![0.0; params.attention.outputs()];
    for t in 0..l {
        let a = enc.attention[t];
        let dz = a * (d_attn[t] - mean);
        let s = trace.attn.hidden.row(t);
        for ((gp, dp), (sv, wv)) in grad
            .attention_proj
            .iter_mut()
            .zip(d_pre.iter_mut())
            .zip(s.iter().zip(&params.attention_proj))
        {
            *gp += dz * sv;
            *dp = dz * wv * (1.0 - sv * sv);
        }
        d_gated.iter_mut().for_each(|v| *v = 0.0);
        params
            .attention
            .backward(trace.attn.gated.row(t), &d_pre, &mut grad.attention, Some(&mut d_gated));
        if trace.pool_gated {
            for (dg, du) in d_gated.iter_mut().zip(d_pooled) {
                *dg += a * du;
            }
        } else {
            for (ds, du) in d_states.row_mut(t).iter_mut().zip(d_pooled) {
                *ds += a * du;
            }
        }
        let g = enc.gates[t];
        let d_gate: f64 = crate::math::dot(&d_gated, enc.states.row(t));
        for (ds, dg) in d_states.row_mut(t).iter_mut().zip(&d_gated) {
            *ds += g * dg;
        }
        let d_arg = d_gate * g * (1.0 - g);
        grad.theta += d_arg;
        grad.mu -= d_arg * delta_days[t];
    }

    let mut d_fwd = Matrix::zeros(l, h);
    let mut d_bwd = Matrix::zeros(l, h);
    for t in 0..l {
        let row = d_states.row(t);
        d_fwd.row_mut(t).copy_from_slice(&row[..h]);
        d_bwd.row_mut(t).copy_from_slice(&row[h..]);
    }
    lstm_backward(&params.forward, inputs, &trace.fwd, &d_fwd, &mut grad.forward);
    lstm_backward(&params.backward, inputs, &trace.bwd, &d_bwd, &mut grad.backward);
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = EncoderParams::init(4, 5, 3, &mut rng);
        let x = Matrix::uniform(3, 4, 1.0, &mut rng);
        assert_eq!(bilstm_encode(&x, &p).unwrap().shape(), (3, 10));
        assert!(bilstm_encode(&Matrix::zeros(3, 5), &p).is_err());
        assert!(bilstm_encode(&Matrix::zeros(0, 4), &p).is_err());
    }

    #[test]
    fn zero_weights_give_zero_states() {
        let p = EncoderParams::zeros(4, 5, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Matrix::uniform(3, 4, 1.0, &mut rng);
        assert!(bilstm_encode(&x, &p).unwrap().as_slice().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn single_step_matches_hand_evaluation() {
        let mut p = EncoderParams::zeros(1, 1, 1);
        // gates (i, f, g, o) pre-activations: w*x + b with x = 1
        p.forward.input = Matrix::from_vec(4, 1, vec![0.5, -0.3, 0.8, 0.2]);
        p.forward.bias = vec![0.1, 0.0, -0.2, 0.3];
        let h = bilstm_encode(&Matrix::from_vec(1, 1, vec![1.0]), &p).unwrap();
        let i = 1.0 / (1.0 + libm::exp(-0.6));
        let g = libm::tanh(0.6);
        let o = 1.0 / (1.0 + libm::exp(-0.5));
        let expected = o * libm::tanh(i * g);
        assert!((h.get(0, 0) - expected).abs() < 1e-12);
        assert_eq!(h.get(0, 1), 0.0);
    }

    #[test]
    fn constant_energies_give_uniform_attention() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut p = EncoderParams::init(4, 2, 3, &mut rng);
        p.mu = 0.0;
        p.attention = Linear::zeros(4, 3);
        let states = Matrix::uniform(3, 4, 1.0, &mut rng);
        let enc = temporal_attention(&states, &[5.0, 2.0, 0.0], &p, false).unwrap();
        for a in &enc.attention {
            assert!((a - 1.0 / 3.0).abs() < 1e-12);
        }
        for c in 0..4 {
            let mean = (0..3).map(|t| states.get(t, c)).sum::<f64>() / 3.0;
            assert!((enc.pooled[c] - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn energies_zero_and_ln3_give_quarter_three_quarters() {
        let mut p = EncoderParams::zeros(1, 1, 1);
        p.attention.weight = Matrix::from_vec(1, 2, vec![1.0, 0.0]);
        // theta = mu = 0 so every gate is 1/2; second state gates to (1, 0)
        p.attention_proj = vec![libm::log(3.0) / libm::tanh(1.0)];
        let states = Matrix::from_vec(2, 2, vec![0.0, 0.0, 2.0, 0.0]);
        let enc = temporal_attention(&states, &[1.0, 0.0], &p, false).unwrap();
        assert!((enc.energies[1] - libm::log(3.0)).abs() < 1e-12);
        assert!((enc.attention[0] - 0.25).abs() < 1e-12);
        assert!((enc.attention[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn older_posts_are_damped() {
        let mut p = EncoderParams::zeros(1, 1, 1);
        p.theta = 0.0;
        p.mu = 0.3;
        let states = Matrix::from_vec(2, 2, vec![1.0, 1.0, 1.0, 1.0]);
        let enc = temporal_attention(&states, &[10.0, 0.0], &p, false).unwrap();
        assert!(enc.gates[0] < enc.gates[1]);
        assert!(enc.gates.iter().all(|g| *g > 0.0 && *g < 1.0));
    }
}
