//! Encoder-decoder network: GRU encoder, GRU decoder with additive attention.
//!
//! Forward and backward passes are written out by hand over flat row-major
//! buffers; one example is processed at a time and gradients are accumulated.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::vocab::{BOS, EOS, PAD, SPECIALS};

/// Row-major matrix; vectors are `cols == 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    fn uniform(rows: usize, cols: usize, scale: f64, rng: &mut impl Rng) -> Self {
        let data = (0..rows * cols)
            .map(|_| rng.random_range(-scale..=scale))
            .collect();
        Tensor { rows, cols, data }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `out = self · x`
    fn matvec(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        for (r, o) in out.iter_mut().enumerate() {
            *o = dot(self.row(r), x);
        }
    }

    /// `out += selfᵀ · y`
    fn matvec_t_acc(&self, y: &[f64], out: &mut [f64]) {
        for (r, &yr) in y.iter().enumerate() {
            if yr != 0.0 {
                axpy(yr, self.row(r), out);
            }
        }
    }

    /// `self += y ⊗ x`
    fn outer_acc(&mut self, y: &[f64], x: &[f64]) {
        for (r, &yr) in y.iter().enumerate() {
            if yr != 0.0 {
                axpy(yr, x, self.row_mut(r));
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

pub const TENSOR_NAMES: [&str; 14] = [
    "encoder.embedding",
    "encoder.gru.input",
    "encoder.gru.hidden",
    "encoder.gru.bias",
    "decoder.embedding",
    "decoder.gru.input",
    "decoder.gru.hidden",
    "decoder.gru.bias",
    "attention.query",
    "attention.key",
    "attention.bias",
    "attention.score",
    "output.weight",
    "output.bias",
];

/// All trainable tensors, in [`TENSOR_NAMES`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub tensors: Vec<Tensor>,
}

const ENC_EMB: usize = 0;
const ENC_WX: usize = 1;
const ENC_WH: usize = 2;
const ENC_B: usize = 3;
const DEC_EMB: usize = 4;
const DEC_WX: usize = 5;
const DEC_WH: usize = 6;
const DEC_B: usize = 7;
const ATT_Q: usize = 8;
const ATT_K: usize = 9;
const ATT_B: usize = 10;
const ATT_V: usize = 11;
const OUT_W: usize = 12;
const OUT_B: usize = 13;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub vocab: usize,
    pub embed: usize,
    pub hidden: usize,
}

impl Params {
    pub fn shapes(d: Dims) -> [(usize, usize); 14] {
        let (v, e, h) = (d.vocab, d.embed, d.hidden);
        [
            (v, e),
            (3 * h, e),
            (3 * h, h),
            (3 * h, 1),
            (v, e),
            (3 * h, e + h),
            (3 * h, h),
            (3 * h, 1),
            (h, h),
            (h, h),
            (h, 1),
            (h, 1),
            (v, 2 * h),
            (v, 1),
        ]
    }

    pub fn zeros(d: Dims) -> Self {
        Params {
            tensors: Self::shapes(d)
                .iter()
                .map(|&(r, c)| Tensor::zeros(r, c))
                .collect(),
        }
    }

    /// Uniform in `[-scale, scale]`, tensors drawn in name order.
    pub fn init(d: Dims, scale: f64, rng: &mut impl Rng) -> Self {
        Params {
            tensors: Self::shapes(d)
                .iter()
                .map(|&(r, c)| Tensor::uniform(r, c, scale, rng))
                .collect(),
        }
    }

    pub fn dims(&self) -> Dims {
        Dims {
            vocab: self.tensors[ENC_EMB].rows,
            embed: self.tensors[ENC_EMB].cols,
            hidden: self.tensors[ENC_WH].cols,
        }
    }

    pub fn fill_zero(&mut self) {
        for t in &mut self.tensors {
            t.data.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn norm(&self) -> f64 {
        self.tensors
            .iter()
            .flat_map(|t| &t.data)
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, k: f64) {
        for t in &mut self.tensors {
            t.data.iter_mut().for_each(|v| *v *= k);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }
}

/// Cached activations of one GRU step.
#[derive(Debug, Clone, Default)]
struct GruStep {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    r: Vec<f64>,
    z: Vec<f64>,
    n: Vec<f64>,
    /// `W_hn · h_prev`
    hn: Vec<f64>,
    h: Vec<f64>,
}

fn gru_forward(wx: &Tensor, wh: &Tensor, b: &Tensor, x: &[f64], h_prev: &[f64]) -> GruStep {
    let h = h_prev.len();
    let mut gx = vec![0.0; 3 * h];
    let mut gh = vec![0.0; 3 * h];
    wx.matvec(x, &mut gx);
    wh.matvec(h_prev, &mut gh);
    let mut r = vec![0.0; h];
    let mut z = vec![0.0; h];
    let mut n = vec![0.0; h];
    let mut out = vec![0.0; h];
    for i in 0..h {
        r[i] = sigmoid(gx[i] + gh[i] + b.data[i]);
        z[i] = sigmoid(gx[h + i] + gh[h + i] + b.data[h + i]);
        n[i] = (gx[2 * h + i] + r[i] * gh[2 * h + i] + b.data[2 * h + i]).tanh();
        out[i] = (1.0 - z[i]) * n[i] + z[i] * h_prev[i];
    }
    GruStep {
        x: x.to_vec(),
        h_prev: h_prev.to_vec(),
        r,
        z,
        n,
        hn: gh[2 * h..].to_vec(),
        h: out,
    }
}

/// Accumulates parameter gradients; returns `(dx, dh_prev)`.
fn gru_backward(
    p: &Params,
    g: &mut Params,
    (wx, wh, b): (usize, usize, usize),
    step: &GruStep,
    dh: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let h = dh.len();
    let mut dgx = vec![0.0; 3 * h];
    let mut dgh = vec![0.0; 3 * h];
    let mut dh_prev = vec![0.0; h];
    for i in 0..h {
        let (r, z, n) = (step.r[i], step.z[i], step.n[i]);
        let dn_pre = dh[i] * (1.0 - z) * (1.0 - n * n);
        let dz_pre = dh[i] * (step.h_prev[i] - n) * z * (1.0 - z);
        let dr_pre = dn_pre * step.hn[i] * r * (1.0 - r);
        dgx[i] = dr_pre;
        dgx[h + i] = dz_pre;
        dgx[2 * h + i] = dn_pre;
        dgh[i] = dr_pre;
        dgh[h + i] = dz_pre;
        dgh[2 * h + i] = dn_pre * r;
        dh_prev[i] = dh[i] * z;
    }
    g.tensors[wx].outer_acc(&dgx, &step.x);
    g.tensors[wh].outer_acc(&dgh, &step.h_prev);
    axpy(1.0, &dgx, &mut g.tensors[b].data);
    let mut dx = vec![0.0; step.x.len()];
    p.tensors[wx].matvec_t_acc(&dgx, &mut dx);
    p.tensors[wh].matvec_t_acc(&dgh, &mut dh_prev);
    (dx, dh_prev)
}

/// Deliberate backward-pass faults, used to show the gradient check catches them.
#[doc(hidden)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mutation {
    #[default]
    None,
    /// Drops the centering term of the attention softmax derivative.
    AttentionSoftmax,
}

struct DecoderStep {
    input: usize,
    target: usize,
    /// Decoder state before this step.
    s_prev: Vec<f64>,
    /// `tanh(q + K_j + b)` per source position, row-major `S × H`.
    att_hidden: Vec<f64>,
    alpha: Vec<f64>,
    context: Vec<f64>,
    gru: GruStep,
    probs: Vec<f64>,
}

struct Encoded {
    steps: Vec<GruStep>,
    /// Encoder outputs, row-major `S × H`.
    states: Vec<f64>,
    /// `W_k · state_j`, row-major `S × H`.
    keys: Vec<f64>,
}

fn encode(p: &Params, src: &[usize]) -> Encoded {
    let Dims { hidden: h, .. } = p.dims();
    let mut steps = Vec::with_capacity(src.len());
    let mut states = Vec::with_capacity(src.len() * h);
    let mut keys = vec![0.0; src.len() * h];
    let mut state = vec![0.0; h];
    for &tok in src {
        let step = gru_forward(
            &p.tensors[ENC_WX],
            &p.tensors[ENC_WH],
            &p.tensors[ENC_B],
            p.tensors[ENC_EMB].row(tok),
            &state,
        );
        state.clone_from(&step.h);
        states.extend_from_slice(&step.h);
        steps.push(step);
    }
    for (j, k) in keys.chunks_mut(h).enumerate() {
        p.tensors[ATT_K].matvec(&states[j * h..(j + 1) * h], k);
    }
    Encoded {
        steps,
        states,
        keys,
    }
}

/// Attention over encoder states with query `s_prev`: returns (hidden activations, weights, context).
fn attend(p: &Params, enc: &Encoded, s_prev: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let h = s_prev.len();
    let len = enc.states.len() / h;
    let mut q = vec![0.0; h];
    p.tensors[ATT_Q].matvec(s_prev, &mut q);
    for (qi, bi) in q.iter_mut().zip(&p.tensors[ATT_B].data) {
        *qi += bi;
    }
    let v = &p.tensors[ATT_V].data;
    let mut act = vec![0.0; len * h];
    let mut alpha = vec![0.0; len];
    for j in 0..len {
        let a = &mut act[j * h..(j + 1) * h];
        let k = &enc.keys[j * h..(j + 1) * h];
        for i in 0..h {
            a[i] = (q[i] + k[i]).tanh();
        }
        alpha[j] = dot(a, v);
    }
    softmax_in_place(&mut alpha);
    let mut context = vec![0.0; h];
    for (j, &w) in alpha.iter().enumerate() {
        axpy(w, &enc.states[j * h..(j + 1) * h], &mut context);
    }
    (act, alpha, context)
}

/// One decoder step: attention, GRU update and output distribution.
fn decode_step(
    p: &Params,
    enc: &Encoded,
    s_prev: &[f64],
    input: usize,
) -> (Vec<f64>, Vec<f64>, Vec<f64>, GruStep, Vec<f64>) {
    let Dims {
        vocab,
        embed,
        hidden: h,
    } = p.dims();
    let (act, alpha, context) = attend(p, enc, s_prev);
    let mut x = Vec::with_capacity(embed + h);
    x.extend_from_slice(p.tensors[DEC_EMB].row(input));
    x.extend_from_slice(&context);
    let gru = gru_forward(
        &p.tensors[DEC_WX],
        &p.tensors[DEC_WH],
        &p.tensors[DEC_B],
        &x,
        s_prev,
    );
    let mut feat = Vec::with_capacity(2 * h);
    feat.extend_from_slice(&gru.h);
    feat.extend_from_slice(&context);
    let mut logits = vec![0.0; vocab];
    p.tensors[OUT_W].matvec(&feat, &mut logits);
    for (l, b) in logits.iter_mut().zip(&p.tensors[OUT_B].data) {
        *l += b;
    }
    (act, alpha, context, gru, logits)
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Decoder input policy for one example.
pub enum Feeding<'a> {
    /// Always the gold previous symbol.
    Teacher,
    /// Per step after the first, `true` means feed the model's own argmax.
    Mixed(&'a [bool]),
}

/// Forward and backward pass for one example. `tgt` ends with EOS; PAD targets
/// are ignored. Gradients of `scale × Σ cross-entropy` are added to `grads`;
/// the unscaled loss sum and the number of scored positions are returned.
pub fn forward_backward(
    p: &Params,
    grads: &mut Params,
    src: &[usize],
    tgt: &[usize],
    scale: f64,
    feeding: Feeding<'_>,
    mutation: Mutation,
) -> (f64, usize) {
    let Dims {
        embed, hidden: h, ..
    } = p.dims();
    let enc = encode(p, src);
    let mut s = enc
        .steps
        .last()
        .map(|st| st.h.clone())
        .unwrap_or_else(|| vec![0.0; h]);

    let mut steps: Vec<DecoderStep> = Vec::with_capacity(tgt.len());
    let mut loss = 0.0;
    let mut scored = 0;
    let mut prev_pred = BOS;
    for t in 0..tgt.len() {
        let input = if t == 0 {
            BOS
        } else {
            match feeding {
                Feeding::Mixed(own) if own[t] => prev_pred,
                _ => tgt[t - 1],
            }
        };
        let (act, alpha, context, gru, mut probs) = decode_step(p, &enc, &s, input);
        prev_pred = argmax(&probs);
        softmax_in_place(&mut probs);
        if tgt[t] != PAD {
            loss -= probs[tgt[t]].ln();
            scored += 1;
        }
        let s_prev = std::mem::replace(&mut s, gru.h.clone());
        steps.push(DecoderStep {
            input,
            target: tgt[t],
            s_prev,
            att_hidden: act,
            alpha,
            context,
            gru,
            probs,
        });
    }

    let len = src.len();
    let mut d_states = vec![0.0; len * h];
    let mut d_keys = vec![0.0; len * h];
    let mut ds = vec![0.0; h];
    for step in steps.iter().rev() {
        // output projection
        let mut dlogits = step.probs.clone();
        if step.target == PAD {
            dlogits.iter_mut().for_each(|v| *v = 0.0);
        } else {
            dlogits[step.target] -= 1.0;
            dlogits.iter_mut().for_each(|v| *v *= scale);
        }
        let mut feat = Vec::with_capacity(2 * h);
        feat.extend_from_slice(&step.gru.h);
        feat.extend_from_slice(&step.context);
        grads.tensors[OUT_W].outer_acc(&dlogits, &feat);
        axpy(1.0, &dlogits, &mut grads.tensors[OUT_B].data);
        let mut dfeat = vec![0.0; 2 * h];
        p.tensors[OUT_W].matvec_t_acc(&dlogits, &mut dfeat);
        for i in 0..h {
            ds[i] += dfeat[i];
        }
        let mut dcontext = dfeat[h..].to_vec();

        // decoder cell
        let (dx, mut ds_prev) = gru_backward(p, grads, (DEC_WX, DEC_WH, DEC_B), &step.gru, &ds);
        axpy(
            1.0,
            &dx[..embed],
            grads.tensors[DEC_EMB].row_mut(step.input),
        );
        axpy(1.0, &dx[embed..], &mut dcontext);

        // attention
        let mut dalpha = vec![0.0; len];
        for j in 0..len {
            let state = &enc.states[j * h..(j + 1) * h];
            axpy(step.alpha[j], &dcontext, &mut d_states[j * h..(j + 1) * h]);
            dalpha[j] = dot(&dcontext, state);
        }
        let centered: f64 = step.alpha.iter().zip(&dalpha).map(|(a, d)| a * d).sum();
        let mut dq = vec![0.0; h];
        for j in 0..len {
            let de = match mutation {
                Mutation::AttentionSoftmax => step.alpha[j] * dalpha[j],
                Mutation::None => step.alpha[j] * (dalpha[j] - centered),
            };
            let a = &step.att_hidden[j * h..(j + 1) * h];
            axpy(de, a, &mut grads.tensors[ATT_V].data);
            let dk = &mut d_keys[j * h..(j + 1) * h];
            for i in 0..h {
                let dpre = de * p.tensors[ATT_V].data[i] * (1.0 - a[i] * a[i]);
                dq[i] += dpre;
                dk[i] += dpre;
            }
        }
        axpy(1.0, &dq, &mut grads.tensors[ATT_B].data);
        grads.tensors[ATT_Q].outer_acc(&dq, &step.s_prev);
        p.tensors[ATT_Q].matvec_t_acc(&dq, &mut ds_prev);
        ds = ds_prev;
    }

    // keys and encoder
    for j in 0..len {
        let state = &enc.states[j * h..(j + 1) * h];
        let dk = &d_keys[j * h..(j + 1) * h];
        grads.tensors[ATT_K].outer_acc(dk, state);
        p.tensors[ATT_K].matvec_t_acc(dk, &mut d_states[j * h..(j + 1) * h]);
    }
    let mut dh = ds;
    for (j, step) in enc.steps.iter().enumerate().rev() {
        axpy(1.0, &d_states[j * h..(j + 1) * h], &mut dh);
        let (dx, dh_prev) = gru_backward(p, grads, (ENC_WX, ENC_WH, ENC_B), step, &dh);
        axpy(1.0, &dx, grads.tensors[ENC_EMB].row_mut(src[j]));
        dh = dh_prev;
    }
    (loss, scored)
}

/// Loss only, with gold decoder inputs.
pub fn loss(p: &Params, src: &[usize], tgt: &[usize]) -> (f64, usize) {
    let h = p.dims().hidden;
    let enc = encode(p, src);
    let mut s = enc
        .steps
        .last()
        .map(|st| st.h.clone())
        .unwrap_or_else(|| vec![0.0; h]);
    let mut total = 0.0;
    let mut scored = 0;
    for t in 0..tgt.len() {
        let input = if t == 0 { BOS } else { tgt[t - 1] };
        let (_, _, _, gru, mut probs) = decode_step(p, &enc, &s, input);
        softmax_in_place(&mut probs);
        if tgt[t] != PAD {
            total -= probs[tgt[t]].ln();
            scored += 1;
        }
        s = gru.h;
    }
    (total, scored)
}

/// Teacher-forced output logits for every scored (non-PAD) target position.
pub fn scored_logits(p: &Params, src: &[usize], tgt: &[usize]) -> Vec<(usize, Vec<f64>)> {
    let h = p.dims().hidden;
    let enc = encode(p, src);
    let mut s = enc
        .steps
        .last()
        .map(|st| st.h.clone())
        .unwrap_or_else(|| vec![0.0; h]);
    let mut out = Vec::new();
    for t in 0..tgt.len() {
        let input = if t == 0 { BOS } else { tgt[t - 1] };
        let (_, _, _, gru, logits) = decode_step(p, &enc, &s, input);
        if tgt[t] != PAD {
            out.push((tgt[t], logits));
        }
        s = gru.h;
    }
    out
}

/// `loss(plus) - loss(minus)` computed from the two logit sets without
/// forming either loss, so tiny differences survive rounding.
pub fn loss_difference(plus: &[(usize, Vec<f64>)], minus: &[(usize, Vec<f64>)]) -> f64 {
    let mut total = 0.0;
    for ((y, zp), (_, zm)) in plus.iter().zip(minus) {
        let mut probs = zm.clone();
        softmax_in_place(&mut probs);
        let shift: f64 = probs
            .iter()
            .zip(zp.iter().zip(zm))
            .map(|(q, (a, b))| q * (a - b).exp_m1())
            .sum();
        total += shift.ln_1p() - (zp[*y] - zm[*y]);
    }
    total
}

/// Greedy decoding; special symbols other than EOS are never emitted.
pub fn greedy(p: &Params, src: &[usize], max_len: usize) -> Vec<usize> {
    let h = p.dims().hidden;
    let enc = encode(p, src);
    let mut s = enc
        .steps
        .last()
        .map(|st| st.h.clone())
        .unwrap_or_else(|| vec![0.0; h]);
    let mut out = Vec::new();
    let mut input = BOS;
    while out.len() < max_len {
        let (_, _, _, gru, logits) = decode_step(p, &enc, &s, input);
        let mut best = EOS;
        for i in SPECIALS..logits.len() {
            if logits[i] > logits[best] {
                best = i;
            }
        }
        if best == EOS {
            break;
        }
        out.push(best);
        input = best;
        s = gru.h;
    }
    out
}
