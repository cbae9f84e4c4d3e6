//! Single-layer LSTM sequence classifier trained by full-batch gradient
//! descent through time.
//!
//! One step over the concatenation `z = [h_{t-1}, x_t]`:
//!
//! ```text
//! f  = σ(W_f·z + b_f)        i = σ(W_i·z + b_i)
//! c̃  = tanh(W_c·z + b_c)     o = σ(W_o·z + b_o)
//! c' = f ⊙ c + i ⊙ c̃         h' = o ⊙ tanh(c')
//! ```
//!
//! The final hidden state feeds a softmax head over enrolled subjects.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audio::FeatureSequence;
use crate::datamodel::SubjectId;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::score::ScoreMatrix;

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-x))
}

/// Gate weights over `[h, x]` (hidden columns first) and biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    pub hidden_size: usize,
    pub input_size: usize,
    pub w_f: Matrix,
    pub w_i: Matrix,
    pub w_c: Matrix,
    pub w_o: Matrix,
    pub b_f: Vec<f64>,
    pub b_i: Vec<f64>,
    pub b_c: Vec<f64>,
    pub b_o: Vec<f64>,
}

impl LstmParams {
    pub fn zeros(hidden_size: usize, input_size: usize) -> Self {
        let w = Matrix::zeros(hidden_size, hidden_size + input_size);
        Self {
            hidden_size,
            input_size,
            w_f: w.clone(),
            w_i: w.clone(),
            w_c: w.clone(),
            w_o: w,
            b_f: vec![0.0; hidden_size],
            b_i: vec![0.0; hidden_size],
            b_c: vec![0.0; hidden_size],
            b_o: vec![0.0; hidden_size],
        }
    }

    /// Every entry drawn uniformly from `(-range, range)`.
    pub fn random<R: Rng>(hidden_size: usize, input_size: usize, range: f64, rng: &mut R) -> Self {
        let mut p = Self::zeros(hidden_size, input_size);
        for t in p.tensors_mut() {
            for v in t.iter_mut() {
                *v = rng.random_range(-range..range);
            }
        }
        p
    }

    pub fn validate(&self) -> Result<()> {
        let cols = self.hidden_size + self.input_size;
        for w in [&self.w_f, &self.w_i, &self.w_c, &self.w_o] {
            if w.rows() != self.hidden_size || w.cols() != cols {
                return Err(Error::DimensionMismatch {
                    expected: self.hidden_size * cols,
                    found: w.rows() * w.cols(),
                });
            }
        }
        for b in [&self.b_f, &self.b_i, &self.b_c, &self.b_o] {
            if b.len() != self.hidden_size {
                return Err(Error::DimensionMismatch {
                    expected: self.hidden_size,
                    found: b.len(),
                });
            }
        }
        if !self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite())) {
            return Err(Error::NonFinite("lstm parameters"));
        }
        Ok(())
    }

    /// Weights then biases, gate order f, i, c, o.
    pub fn tensors(&self) -> [&[f64]; 8] {
        [
            self.w_f.as_slice(),
            self.w_i.as_slice(),
            self.w_c.as_slice(),
            self.w_o.as_slice(),
            &self.b_f,
            &self.b_i,
            &self.b_c,
            &self.b_o,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 8] {
        [
            self.w_f.as_mut_slice(),
            self.w_i.as_mut_slice(),
            self.w_c.as_mut_slice(),
            self.w_o.as_mut_slice(),
            &mut self.b_f,
            &mut self.b_i,
            &mut self.b_c,
            &mut self.b_o,
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden_size: usize) -> Self {
        Self {
            h: vec![0.0; hidden_size],
            c: vec![0.0; hidden_size],
        }
    }
}

/// Softmax output layer over enrolled subjects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierHead {
    pub w_out: Matrix,
    pub b_out: Vec<f64>,
    pub classes: Vec<SubjectId>,
}

impl ClassifierHead {
    pub fn zeros(classes: Vec<SubjectId>, hidden_size: usize) -> Self {
        Self {
            w_out: Matrix::zeros(classes.len(), hidden_size),
            b_out: vec![0.0; classes.len()],
            classes,
        }
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn logits(&self, h: &[f64]) -> Vec<f64> {
        self.w_out
            .iter_rows()
            .zip(&self.b_out)
            .map(|(w, b)| b + w.iter().zip(h).map(|(a, x)| a * x).sum::<f64>())
            .collect()
    }

    pub fn softmax(&self, h: &[f64]) -> Vec<f64> {
        softmax(&self.logits(h))
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| libm::exp(l - max)).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Gate weights packed input-major: row `k` holds the weights of input
/// component `k` for all `4·hidden` gate units (order f, i, c, o).
struct Packed {
    hidden: usize,
    input: usize,
    /// cols × 4h: row k holds the weights of input k for every gate unit.
    wt: Vec<f64>,
    /// 4h × cols, the same weights gate-major for the backward pass.
    w: Vec<f64>,
    bias: Vec<f64>,
}

impl Packed {
    fn new(p: &LstmParams) -> Self {
        let (h, cols) = (p.hidden_size, p.hidden_size + p.input_size);
        let g4 = 4 * h;
        let mut wt = vec![0.0; cols * g4];
        let mut rows = Vec::with_capacity(cols * g4);
        for (gate, w) in [&p.w_f, &p.w_i, &p.w_c, &p.w_o].into_iter().enumerate() {
            rows.extend_from_slice(w.as_slice());
            for r in 0..h {
                for k in 0..cols {
                    wt[k * g4 + gate * h + r] = w.get(r, k);
                }
            }
        }
        let mut bias = Vec::with_capacity(g4);
        for b in [&p.b_f, &p.b_i, &p.b_c, &p.b_o] {
            bias.extend_from_slice(b);
        }
        Self {
            hidden: h,
            input: p.input_size,
            wt,
            w: rows,
            bias,
        }
    }

    /// Pre-activations of all gates for concatenated input `z`.
    #[inline]
    fn preact(&self, z: &[f64], pre: &mut [f64]) {
        let g4 = 4 * self.hidden;
        pre.copy_from_slice(&self.bias);
        for (k, &v) in z.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            let row = &self.wt[k * g4..(k + 1) * g4];
            for (p, w) in pre.iter_mut().zip(row) {
                *p += v * w;
            }
        }
    }

    /// One cell update. `gates` receives activated f, i, c̃, o.
    fn step(&self, z: &[f64], c_prev: &[f64], gates: &mut [f64], c: &mut [f64], h: &mut [f64]) {
        let hs = self.hidden;
        self.preact(z, gates);
        for u in 0..hs {
            gates[u] = sigmoid(gates[u]);
            gates[hs + u] = sigmoid(gates[hs + u]);
            gates[2 * hs + u] = libm::tanh(gates[2 * hs + u]);
            gates[3 * hs + u] = sigmoid(gates[3 * hs + u]);
            c[u] = gates[u] * c_prev[u] + gates[hs + u] * gates[2 * hs + u];
            h[u] = gates[3 * hs + u] * libm::tanh(c[u]);
        }
    }

    fn run(&self, frames: &Matrix) -> LstmState {
        let hs = self.hidden;
        let mut state = LstmState::zeros(hs);
        let mut z = vec![0.0; hs + self.input];
        let mut gates = vec![0.0; 4 * hs];
        let mut c = vec![0.0; hs];
        for x in frames.iter_rows() {
            z[..hs].copy_from_slice(&state.h);
            z[hs..].copy_from_slice(x);
            self.step(&z, &state.c, &mut gates, &mut c, &mut state.h);
            core::mem::swap(&mut state.c, &mut c);
        }
        state
    }
}

fn check_input(p: &LstmParams, len: usize) -> Result<()> {
    if len != p.input_size {
        return Err(Error::DimensionMismatch {
            expected: p.input_size,
            found: len,
        });
    }
    Ok(())
}

pub fn cell_forward(x: &[f64], s: &LstmState, p: &LstmParams) -> Result<LstmState> {
    p.validate()?;
    check_input(p, x.len())?;
    if s.h.len() != p.hidden_size || s.c.len() != p.hidden_size {
        return Err(Error::DimensionMismatch {
            expected: p.hidden_size,
            found: s.h.len().max(s.c.len()),
        });
    }
    let packed = Packed::new(p);
    let hs = p.hidden_size;
    let mut z = Vec::with_capacity(hs + x.len());
    z.extend_from_slice(&s.h);
    z.extend_from_slice(x);
    let mut gates = vec![0.0; 4 * hs];
    let mut out = LstmState::zeros(hs);
    packed.step(&z, &s.c, &mut gates, &mut out.c, &mut out.h);
    Ok(out)
}

/// Folds [`cell_forward`] over the frames from the zero state.
pub fn sequence_forward(seq: &Matrix, p: &LstmParams) -> Result<LstmState> {
    p.validate()?;
    if seq.rows() == 0 {
        return Err(Error::Empty("sequence"));
    }
    check_input(p, seq.cols())?;
    Ok(Packed::new(p).run(seq))
}

/// Gradients with the same layout as the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub params: LstmParams,
    pub head: ClassifierHead,
}

/// Mean cross-entropy over `batch` and, when `grads` is given, its gradient
/// accumulated there (overwritten).
fn loss_and_grad(
    p: &LstmParams,
    head: &ClassifierHead,
    batch: &[&Matrix],
    labels: &[usize],
    mut grads: Option<&mut Gradients>,
) -> f64 {
    let packed = Packed::new(p);
    let hs = p.hidden_size;
    let cols = hs + p.input_size;
    let g4 = 4 * hs;
    let scale = 1.0 / batch.len() as f64;

    let mut d_wt = vec![0.0; if grads.is_some() { cols * g4 } else { 0 }];
    let mut d_bias = vec![0.0; if grads.is_some() { g4 } else { 0 }];
    if let Some(g) = grads.as_deref_mut() {
        g.head.w_out.as_mut_slice().fill(0.0);
        g.head.b_out.fill(0.0);
    }

    let mut loss = 0.0;
    // per-step caches: z, gates, c (c_prev comes from the previous step)
    let mut zs: Vec<f64> = Vec::new();
    let mut gs: Vec<f64> = Vec::new();
    let mut cs: Vec<f64> = Vec::new();
    let mut dpre = vec![0.0; g4];
    let mut dz = vec![0.0; cols];
    let zero = vec![0.0; hs];

    for (seq, &label) in batch.iter().zip(labels) {
        let t_len = seq.rows();
        zs.clear();
        zs.resize(t_len * cols, 0.0);
        gs.clear();
        gs.resize(t_len * g4, 0.0);
        cs.clear();
        cs.resize(t_len * hs, 0.0);
        let mut h = vec![0.0; hs];
        for t in 0..t_len {
            let z = &mut zs[t * cols..(t + 1) * cols];
            z[..hs].copy_from_slice(&h);
            z[hs..].copy_from_slice(seq.row(t));
            let (c_done, c_rest) = cs.split_at_mut(t * hs);
            let c_prev = if t == 0 { &zero[..] } else { &c_done[(t - 1) * hs..] };
            packed.step(
                &zs[t * cols..(t + 1) * cols],
                c_prev,
                &mut gs[t * g4..(t + 1) * g4],
                &mut c_rest[..hs],
                &mut h,
            );
        }
        let probs = head.softmax(&h);
        loss -= libm::log(probs[label].max(f64::MIN_POSITIVE)) * scale;

        let Some(g) = grads.as_deref_mut() else {
            continue;
        };
        let mut dh = vec![0.0; hs];
        for (k, pk) in probs.iter().enumerate() {
            let dl = (pk - if k == label { 1.0 } else { 0.0 }) * scale;
            g.head.b_out[k] += dl;
            let w_row = head.w_out.row(k);
            for (u, gw) in g.head.w_out.row_mut(k).iter_mut().enumerate() {
                *gw += dl * h[u];
                dh[u] += dl * w_row[u];
            }
        }
        let mut dc = vec![0.0; hs];
        for t in (0..t_len).rev() {
            let gates = &gs[t * g4..(t + 1) * g4];
            let c = &cs[t * hs..(t + 1) * hs];
            let c_prev = if t == 0 { &zero[..] } else { &cs[(t - 1) * hs..t * hs] };
            for u in 0..hs {
                let (f, i, cand, o) = (gates[u], gates[hs + u], gates[2 * hs + u], gates[3 * hs + u]);
                let tc = libm::tanh(c[u]);
                let d_o = dh[u] * tc;
                let dcu = dc[u] + dh[u] * o * (1.0 - tc * tc);
                dpre[u] = dcu * c_prev[u] * f * (1.0 - f);
                dpre[hs + u] = dcu * cand * i * (1.0 - i);
                dpre[2 * hs + u] = dcu * i * (1.0 - cand * cand);
                dpre[3 * hs + u] = d_o * o * (1.0 - o);
                dc[u] = dcu * f;
            }
            let z = &zs[t * cols..(t + 1) * cols];
            for (k, &zk) in z.iter().enumerate() {
                for (dw, dp) in d_wt[k * g4..(k + 1) * g4].iter_mut().zip(&dpre) {
                    *dw += zk * dp;
                }
            }
            // accumulate dz gate-major: axpy rows instead of long dot products
            dz.fill(0.0);
            for (g, &dp) in dpre.iter().enumerate() {
                for (d, w) in dz.iter_mut().zip(&packed.w[g * cols..(g + 1) * cols]) {
                    *d += dp * w;
                }
            }
            for (db, dp) in d_bias.iter_mut().zip(&dpre) {
                *db += dp;
            }
            dh.copy_from_slice(&dz[..hs]);
        }
    }

    if let Some(g) = grads {
        let gp = &mut g.params;
        for (gate, w) in [&mut gp.w_f, &mut gp.w_i, &mut gp.w_c, &mut gp.w_o]
            .into_iter()
            .enumerate()
        {
            for r in 0..hs {
                for k in 0..cols {
                    w.set(r, k, d_wt[k * g4 + gate * hs + r]);
                }
            }
        }
        for (gate, b) in [&mut gp.b_f, &mut gp.b_i, &mut gp.b_c, &mut gp.b_o]
            .into_iter()
            .enumerate()
        {
            b.copy_from_slice(&d_bias[gate * hs..(gate + 1) * hs]);
        }
    }
    loss
}

/// Cross-entropy of one labelled sequence.
pub fn sequence_loss(p: &LstmParams, head: &ClassifierHead, seq: &Matrix, label: usize) -> f64 {
    loss_and_grad(p, head, &[seq], &[label], None)
}

/// Analytic gradient of [`sequence_loss`] by backpropagation through time.
pub fn sequence_gradient(p: &LstmParams, head: &ClassifierHead, seq: &Matrix, label: usize) -> Gradients {
    let mut g = Gradients {
        params: LstmParams::zeros(p.hidden_size, p.input_size),
        head: ClassifierHead::zeros(head.classes.clone(), p.hidden_size),
    };
    loss_and_grad(p, head, &[seq], &[label], Some(&mut g));
    g
}

/// Largest relative disagreement between the analytic gradient and central
/// differences with the given step, over every parameter of the cell and
/// the head. Relative error is `|a − n| / max(|a| + |n|, 1e-8)`.
pub fn gradient_check(p: &LstmParams, head: &ClassifierHead, seq: &Matrix, label: usize, step: f64) -> f64 {
    let analytic = sequence_gradient(p, head, seq, label);
    let mut worst = 0.0f64;
    let mut rel = |a: f64, n: f64| {
        let e = (a - n).abs() / (a.abs() + n.abs()).max(1e-8);
        worst = worst.max(e);
    };

    let mut probe = p.clone();
    let grads = analytic.params.tensors();
    for (tensor, grad) in grads.iter().enumerate() {
        for idx in 0..grad.len() {
            let orig = probe.tensors()[tensor][idx];
            probe.tensors_mut()[tensor][idx] = orig + step;
            let up = sequence_loss(&probe, head, seq, label);
            probe.tensors_mut()[tensor][idx] = orig - step;
            let down = sequence_loss(&probe, head, seq, label);
            probe.tensors_mut()[tensor][idx] = orig;
            rel(grad[idx], (up - down) / (2.0 * step));
        }
    }

    let mut h = head.clone();
    for idx in 0..h.w_out.as_slice().len() {
        let orig = h.w_out.as_slice()[idx];
        h.w_out.as_mut_slice()[idx] = orig + step;
        let up = sequence_loss(p, &h, seq, label);
        h.w_out.as_mut_slice()[idx] = orig - step;
        let down = sequence_loss(p, &h, seq, label);
        h.w_out.as_mut_slice()[idx] = orig;
        rel(analytic.head.w_out.as_slice()[idx], (up - down) / (2.0 * step));
    }
    for idx in 0..h.b_out.len() {
        let orig = h.b_out[idx];
        h.b_out[idx] = orig + step;
        let up = sequence_loss(p, &h, seq, label);
        h.b_out[idx] = orig - step;
        let down = sequence_loss(p, &h, seq, label);
        h.b_out[idx] = orig;
        rel(analytic.head.b_out[idx], (up - down) / (2.0 * step));
    }
    worst
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LstmConfig {
    pub hidden_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Parameters start uniform in `(-init_range, init_range)`.
    pub init_range: f64,
    /// Sequences are truncated or zero-padded to this many frames.
    pub seq_len: usize,
    /// Standardize each coefficient with gallery statistics before the cell.
    pub standardize: bool,
    pub seed: u64,
}

impl Default for LstmConfig {
    fn default() -> Self {
        Self {
            hidden_size: 32,
            learning_rate: 0.05,
            epochs: 200,
            init_range: 0.1,
            seq_len: 100,
            standardize: true,
            seed: 0,
        }
    }
}

impl LstmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_size == 0 || self.seq_len == 0 {
            return Err(Error::InvalidConfig("hidden size and sequence length must be positive".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.init_range > 0.0) {
            return Err(Error::InvalidConfig("learning rate and init range must be positive".into()));
        }
        Ok(())
    }
}

/// Per-coefficient affine map applied to frames before the cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    fn fit(frames: &[&Matrix], dim: usize) -> Self {
        let mut mean = vec![0.0; dim];
        let mut sq = vec![0.0; dim];
        let mut n = 0usize;
        for m in frames {
            for row in m.iter_rows() {
                for (k, v) in row.iter().enumerate() {
                    mean[k] += v;
                    sq[k] += v * v;
                }
                n += 1;
            }
        }
        let n = n.max(1) as f64;
        let scale = mean
            .iter_mut()
            .zip(&sq)
            .map(|(m, s)| {
                *m /= n;
                let var = (s / n - *m * *m).max(0.0);
                if var > 1e-24 {
                    1.0 / libm::sqrt(var)
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }
}

/// Trained LSTM classifier and everything needed to score probes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmModel {
    pub params: LstmParams,
    pub head: ClassifierHead,
    pub standardizer: Standardizer,
    pub config: LstmConfig,
}

impl LstmModel {
    /// Truncates/pads to the configured length and standardizes the real frames.
    pub fn prepare(&self, seq: &FeatureSequence) -> Result<Matrix> {
        check_input(&self.params, seq.dim())?;
        Ok(prepare(seq.frames(), self.config.seq_len, &self.standardizer))
    }

    pub fn predict_proba(&self, seq: &FeatureSequence) -> Result<Vec<f64>> {
        let x = self.prepare(seq)?;
        let state = Packed::new(&self.params).run(&x);
        Ok(self.head.softmax(&state.h))
    }
}

fn prepare(frames: &Matrix, seq_len: usize, st: &Standardizer) -> Matrix {
    let mut out = Matrix::zeros(seq_len, frames.cols());
    for t in 0..seq_len.min(frames.rows()) {
        for (k, (o, v)) in out.row_mut(t).iter_mut().zip(frames.row(t)).enumerate() {
            *o = (v - st.mean[k]) * st.scale[k];
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: LstmModel,
    /// Loss before each epoch's update, plus the final loss.
    pub loss_trace: Vec<f64>,
}

pub fn train_classifier(gallery: &[(SubjectId, &FeatureSequence)], cfg: &LstmConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let Some((_, first)) = gallery.first() else {
        return Err(Error::Empty("lstm gallery"));
    };
    let dim = first.dim();
    let mut classes: Vec<SubjectId> = Vec::new();
    let mut labels = Vec::with_capacity(gallery.len());
    for (s, seq) in gallery {
        if seq.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: seq.dim(),
            });
        }
        let idx = match classes.iter().position(|c| c == s) {
            Some(i) => i,
            None => {
                classes.push(s.clone());
                classes.len() - 1
            }
        };
        labels.push(idx);
    }
    if classes.len() < 2 {
        return Err(Error::TooFewClasses(classes.len()));
    }

    let standardizer = if cfg.standardize {
        let truncated: Vec<Matrix> = gallery
            .iter()
            .map(|(_, s)| {
                let keep = s.n_frames().min(cfg.seq_len);
                Matrix::from_vec(keep, dim, s.frames().as_slice()[..keep * dim].to_vec())
            })
            .collect::<Result<_>>()?;
        Standardizer::fit(&truncated.iter().collect::<Vec<_>>(), dim)
    } else {
        Standardizer::identity(dim)
    };
    let inputs: Vec<Matrix> = gallery
        .iter()
        .map(|(_, s)| prepare(s.frames(), cfg.seq_len, &standardizer))
        .collect();
    let batch: Vec<&Matrix> = inputs.iter().collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = LstmParams::random(cfg.hidden_size, dim, cfg.init_range, &mut rng);
    let mut head = ClassifierHead::zeros(classes, cfg.hidden_size);
    for v in head.w_out.as_mut_slice().iter_mut().chain(head.b_out.iter_mut()) {
        *v = rng.random_range(-cfg.init_range..cfg.init_range);
    }

    let mut grads = Gradients {
        params: LstmParams::zeros(cfg.hidden_size, dim),
        head: ClassifierHead::zeros(head.classes.clone(), cfg.hidden_size),
    };
    let mut loss_trace = Vec::with_capacity(cfg.epochs + 1);
    for epoch in 0..cfg.epochs {
        let loss = loss_and_grad(&params, &head, &batch, &labels, Some(&mut grads));
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        loss_trace.push(loss);
        for (t, g) in params.tensors_mut().into_iter().zip(grads.params.tensors()) {
            for (v, d) in t.iter_mut().zip(g) {
                *v -= cfg.learning_rate * d;
            }
        }
        for (v, d) in head
            .w_out
            .as_mut_slice()
            .iter_mut()
            .zip(grads.head.w_out.as_slice())
            .chain(head.b_out.iter_mut().zip(&grads.head.b_out))
        {
            *v -= cfg.learning_rate * d;
        }
        let diverged = params
            .tensors()
            .iter()
            .flat_map(|t| t.iter())
            .chain(head.w_out.as_slice())
            .chain(&head.b_out)
            .any(|v| !v.is_finite());
        if diverged {
            return Err(Error::NonFiniteLoss { epoch });
        }
    }
    let last = loss_and_grad(&params, &head, &batch, &labels, None);
    if !last.is_finite() {
        return Err(Error::NonFiniteLoss { epoch: cfg.epochs });
    }
    loss_trace.push(last);

    Ok(TrainOutcome {
        model: LstmModel {
            params,
            head,
            standardizer,
            config: cfg.clone(),
        },
        loss_trace,
    })
}

/// `1 − p(class | probe)` for every probe and enrolled class.
pub fn lstm_scores(probes: &[(String, &FeatureSequence)], model: &LstmModel) -> Result<ScoreMatrix> {
    if probes.is_empty() {
        return Err(Error::Empty("probe set"));
    }
    let packed = Packed::new(&model.params);
    let n_classes = model.head.n_classes();
    let mut values = Matrix::zeros(probes.len(), n_classes);
    for (r, (_, seq)) in probes.iter().enumerate() {
        let x = model.prepare(seq)?;
        let state = packed.run(&x);
        for (v, p) in values.row_mut(r).iter_mut().zip(model.head.softmax(&state.h)) {
            *v = 1.0 - p;
        }
    }
    ScoreMatrix::new(
        probes.iter().map(|(id, _)| id.clone()).collect(),
        model.head.classes.clone(),
        values,
        false,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;
    use alloc::string::ToString;

    fn rand_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
        let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
        Matrix::from_vec(rows, cols, data).unwrap()
    }

    fn random_head(n: usize, hidden: usize, rng: &mut ChaCha8Rng) -> ClassifierHead {
        let classes = (0..n).map(|i| SubjectId::new(format!("c{i}")).unwrap()).collect();
        let mut head = ClassifierHead::zeros(classes, hidden);
        for v in head.w_out.as_mut_slice().iter_mut().chain(head.b_out.iter_mut()) {
            *v = rng.random_range(-0.5..0.5);
        }
        head
    }

    #[test]
    fn zero_params_give_half_gates() {
        let p = LstmParams::zeros(3, 2);
        let s = cell_forward(&[0.0, 0.0], &LstmState::zeros(3), &p).unwrap();
        assert_eq!(s.c, [0.0; 3]);
        assert_eq!(s.h, [0.0; 3]);
        // with a unit candidate the half-open gates are visible in c
        let mut p = LstmParams::zeros(1, 1);
        p.b_c[0] = 50.0;
        let s = cell_forward(&[0.0], &LstmState { h: vec![0.0], c: vec![1.0] }, &p).unwrap();
        assert!((s.c[0] - 1.0).abs() < 1e-12);
        assert!((s.h[0] - 0.5 * libm::tanh(1.0)).abs() < 1e-12);
    }

    #[test]
    fn saturated_forget_gate_keeps_cell() {
        let mut p = LstmParams::zeros(2, 1);
        p.b_f = vec![20.0; 2];
        let s = cell_forward(&[0.7], &LstmState { h: vec![0.0; 2], c: vec![1.0; 2] }, &p).unwrap();
        assert!(s.c.iter().all(|c| (c - 1.0).abs() < 1e-8));

        // f = 1, i = 0 forced: cell preserved
        p.b_i = vec![-40.0; 2];
        p.b_f = vec![40.0; 2];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        p.w_c = rand_matrix(2, 3, &mut rng);
        let start = LstmState { h: vec![0.3, -0.2], c: vec![0.8, -1.7] };
        let s = cell_forward(&[0.4], &start, &p).unwrap();
        for (a, b) in s.c.iter().zip(&start.c) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn gates_in_range_and_h_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = LstmParams::random(5, 3, 2.0, &mut rng);
        let seq = rand_matrix(12, 3, &mut rng);
        let packed = Packed::new(&p);
        let mut gates = vec![0.0; 20];
        let z: Vec<f64> = (0..8).map(|_| rng.random_range(-3.0..3.0)).collect();
        let mut c = vec![0.0; 5];
        let mut h = vec![0.0; 5];
        packed.step(&z, &[0.5; 5], &mut gates, &mut c, &mut h);
        for u in 0..5 {
            for g in [0, 1, 3] {
                let v = gates[g * 5 + u];
                assert!(v > 0.0 && v < 1.0);
            }
            assert!(gates[10 + u] > -1.0 && gates[10 + u] < 1.0);
        }
        let s = sequence_forward(&seq, &p).unwrap();
        assert!(s.h.iter().all(|h| *h > -1.0 && *h < 1.0));
    }

    #[test]
    fn single_step_sequence_equals_cell() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = LstmParams::random(4, 3, 0.5, &mut rng);
        let x = rand_matrix(1, 3, &mut rng);
        let a = sequence_forward(&x, &p).unwrap();
        let b = cell_forward(x.row(0), &LstmState::zeros(4), &p).unwrap();
        assert_eq!(a, b);
        assert_eq!(sequence_forward(&x, &p).unwrap(), a);
        assert!(sequence_forward(&Matrix::zeros(0, 3), &p).is_err());
        assert!(cell_forward(&[1.0, 2.0], &LstmState::zeros(4), &p).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = LstmParams::random(4, 3, 0.5, &mut rng);
        let head = random_head(3, 4, &mut rng);
        let seq = rand_matrix(5, 3, &mut rng);
        let err = gradient_check(&p, &head, &seq, 1, 1e-5);
        assert!(err < 1e-4, "max relative error {err}");
        assert_eq!(err, gradient_check(&p, &head, &seq, 1, 1e-5));
        // single cell step
        let one = rand_matrix(1, 3, &mut rng);
        assert!(gradient_check(&p, &head, &one, 0, 1e-5) < 1e-4);
    }

    #[test]
    fn central_difference_error_is_second_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = LstmParams::random(4, 3, 0.5, &mut rng);
        let head = random_head(3, 4, &mut rng);
        let seq = rand_matrix(5, 3, &mut rng);
        // below ~1e-4 rounding in the loss differences dominates, so the
        // order is measured where truncation error still leads
        let coarse = gradient_check(&p, &head, &seq, 1, 1e-2);
        let fine = gradient_check(&p, &head, &seq, 1, 1e-3);
        let ratio = coarse / fine;
        assert!((30.0..300.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn softmax_normalizes() {
        let p = softmax(&[1000.0, -3.0, 2.5, 999.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|v| v.is_finite() && *v >= 0.0));
    }

    fn ramps() -> Vec<(SubjectId, FeatureSequence)> {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut out = Vec::new();
        for n in 0..20 {
            let rising = n % 2 == 0;
            let class = if rising { "up" } else { "down" };
            let offset: f64 = rng.random_range(-0.3..0.3);
            let slope: f64 = rng.random_range(0.05..0.15);
            let vals: Vec<f64> = (0..12)
                .map(|t| {
                    let r = offset + slope * t as f64;
                    let v = if rising { r } else { -r };
                    v + rng.random_range(-0.02..0.02)
                })
                .collect();
            let frames: Vec<[f64; 2]> = vals.iter().map(|v| [*v, 0.5 * v]).collect();
            out.push((
                SubjectId::new(class).unwrap(),
                FeatureSequence::from_frames(Matrix::from_rows(&frames).unwrap()).unwrap(),
            ));
        }
        out
    }

    fn ramp_config() -> LstmConfig {
        LstmConfig {
            hidden_size: 8,
            seq_len: 12,
            seed: 9,
            ..LstmConfig::default()
        }
    }

    #[test]
    fn learns_separable_ramps() {
        let data = ramps();
        let gallery: Vec<(SubjectId, &FeatureSequence)> = data.iter().map(|(s, f)| (s.clone(), f)).collect();
        let out = train_classifier(&gallery, &ramp_config()).unwrap();
        assert_eq!(out.loss_trace.len(), 201);
        assert!(out.loss_trace[50] < out.loss_trace[0]);
        let probes: Vec<(String, &FeatureSequence)> =
            data.iter().enumerate().map(|(i, (_, f))| (format!("p{i}"), f)).collect();
        let scores = lstm_scores(&probes, &out.model).unwrap();
        for (r, (truth, _)) in data.iter().enumerate() {
            let row = scores.values().row(r);
            let t = scores.subject_index(truth).unwrap();
            assert!(row.iter().enumerate().all(|(c, v)| c == t || row[t] < *v), "probe {r}");
            assert!(row.iter().all(|v| (0.0..=1.0).contains(v)));
            assert!((row.iter().map(|v| 1.0 - v).sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn training_is_deterministic() {
        let data = ramps();
        let gallery: Vec<(SubjectId, &FeatureSequence)> = data.iter().map(|(s, f)| (s.clone(), f)).collect();
        let cfg = LstmConfig { epochs: 20, ..ramp_config() };
        let a = train_classifier(&gallery, &cfg).unwrap();
        let b = train_classifier(&gallery, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn degenerate_training_inputs() {
        let data = ramps();
        let one_class: Vec<(SubjectId, &FeatureSequence)> =
            data.iter().filter(|(s, _)| s.as_str() == "up").map(|(s, f)| (s.clone(), f)).collect();
        assert_eq!(
            train_classifier(&one_class, &ramp_config()).unwrap_err(),
            Error::TooFewClasses(1)
        );
        let gallery: Vec<(SubjectId, &FeatureSequence)> = data.iter().map(|(s, f)| (s.clone(), f)).collect();
        let wild = LstmConfig { learning_rate: f64::MAX, epochs: 5, ..ramp_config() };
        let err = train_classifier(&gallery, &wild).unwrap_err();
        assert!(matches!(err, Error::NonFiniteLoss { .. }), "{}", err.to_string());
    }
}
