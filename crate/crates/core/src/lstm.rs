//! Embedding + single LSTM layer + one sigmoid unit, trained with full
//! backpropagation through time and Adam.
//!
//! Per step `t`, with `x_t` the embedding row of the token (zero for
//! padding index 0):
//!
//! ```text
//! i_t = σ(W_i x_t + U_i h_{t-1} + b_i)      f_t = σ(W_f x_t + U_f h_{t-1} + b_f)
//! g_t = tanh(W_g x_t + U_g h_{t-1} + b_g)   o_t = σ(W_o x_t + U_o h_{t-1} + b_o)
//! c_t = f_t ⊙ c_{t-1} + i_t ⊙ g_t           h_t = o_t ⊙ tanh(c_t)
//! ŷ   = σ(w_out · h_T + b_out)
//! ```
//!
//! Gate weights are stored stacked in the order `i, f, g, o`: row
//! `gate * d_hidden + j` of `w` (shape `4H × E`) and `u` (shape `4H × H`).

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{mix_seed, SplitMix64};
use crate::split::stratified_split;
use crate::text_pipeline::{encode, preprocess, TextError, TokenSequence, Vocabulary};
use crate::url_features::Label;

/// Probability clamp used by the head and the loss.
pub const PROB_EPS: f64 = 1e-7;

const GATES: usize = 4;

#[derive(Debug, Error)]
pub enum LstmError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("training diverged: non-finite loss at epoch {epoch}, batch {batch}")]
    Divergence { epoch: usize, batch: usize },
    #[error("training error: {0}")]
    Training(String),
    #[error("model has no attached vocabulary")]
    NoVocabulary,
    #[error("model file: {0}")]
    Format(String),
    #[error(transparent)]
    Text(#[from] TextError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LstmDims {
    /// Number of vocabulary words; the embedding has one more row for padding.
    pub vocab_size: usize,
    pub d_embed: usize,
    pub d_hidden: usize,
    pub sequence_length: usize,
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmModel {
    pub dims: LstmDims,
    /// `(vocab_size + 1) × d_embed`, row 0 is padding and stays zero.
    pub embedding: Vec<f64>,
    pub w: Vec<f64>,
    pub u: Vec<f64>,
    pub b: Vec<f64>,
    pub w_out: Vec<f64>,
    pub b_out: f64,
    pub vocabulary: Option<Vocabulary>,
}

/// Per-step activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct StepCache {
    pub token: usize,
    /// `[i | f | g | o]`, post-activation.
    pub gates: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub h: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ForwardPass {
    /// Clamped to `[PROB_EPS, 1 - PROB_EPS]`.
    pub probability: f64,
    pub logit: f64,
    pub steps: Vec<StepCache>,
}

/// Gradients for every parameter tensor, laid out like [`LstmModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub embedding: Vec<f64>,
    pub w: Vec<f64>,
    pub u: Vec<f64>,
    pub b: Vec<f64>,
    pub w_out: Vec<f64>,
    pub b_out: f64,
}

/// Gradient of one example; embedding rows are kept sparse.
struct SampleGradients {
    loss: f64,
    correct: bool,
    embedding_rows: Vec<(usize, Vec<f64>)>,
    w: Vec<f64>,
    u: Vec<f64>,
    b: Vec<f64>,
    w_out: Vec<f64>,
    b_out: f64,
}

impl Gradients {
    fn zeros(dims: &LstmDims) -> Self {
        let h4 = GATES * dims.d_hidden;
        Self {
            embedding: vec![0.0; (dims.vocab_size + 1) * dims.d_embed],
            w: vec![0.0; h4 * dims.d_embed],
            u: vec![0.0; h4 * dims.d_hidden],
            b: vec![0.0; h4],
            w_out: vec![0.0; dims.d_hidden],
            b_out: 0.0,
        }
    }

    fn add_sample(&mut self, s: &SampleGradients, d_embed: usize) {
        for (token, row) in &s.embedding_rows {
            let dst = &mut self.embedding[token * d_embed..(token + 1) * d_embed];
            dst.iter_mut().zip(row).for_each(|(a, b)| *a += b);
        }
        add_into(&mut self.w, &s.w);
        add_into(&mut self.u, &s.u);
        add_into(&mut self.b, &s.b);
        add_into(&mut self.w_out, &s.w_out);
        self.b_out += s.b_out;
    }

    fn scale(&mut self, k: f64) {
        for t in [
            &mut self.embedding,
            &mut self.w,
            &mut self.u,
            &mut self.b,
            &mut self.w_out,
        ] {
            t.iter_mut().for_each(|x| *x *= k);
        }
        self.b_out *= k;
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(a, b)| *a += b);
}

/// Binary cross-entropy with the prediction clamped to `[PROB_EPS, 1 - PROB_EPS]`.
pub fn loss(prediction: f64, label: Label) -> f64 {
    let p = prediction.clamp(PROB_EPS, 1.0 - PROB_EPS);
    match label {
        Label::Phishing => -p.ln(),
        Label::Legitimate => -(1.0 - p).ln(),
    }
}

pub fn mean_loss(pairs: &[(f64, Label)]) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    pairs.iter().map(|&(p, y)| loss(p, y)).sum::<f64>() / pairs.len() as f64
}

impl LstmModel {
    pub fn zeros(dims: LstmDims) -> Self {
        let h4 = GATES * dims.d_hidden;
        Self {
            dims,
            embedding: vec![0.0; (dims.vocab_size + 1) * dims.d_embed],
            w: vec![0.0; h4 * dims.d_embed],
            u: vec![0.0; h4 * dims.d_hidden],
            b: vec![0.0; h4],
            w_out: vec![0.0; dims.d_hidden],
            b_out: 0.0,
            vocabulary: None,
        }
    }

    /// Uniform(±1/√fan_in) weights, forget-gate bias 1, other biases 0.
    /// Embedding rows use fan_in = `d_embed`; the padding row is zero.
    pub fn new(dims: LstmDims, seed: u64) -> Self {
        let mut m = Self::zeros(dims);
        let mut rng = SplitMix64::new(seed);
        let e = dims.d_embed;
        let h = dims.d_hidden;
        let fill = |buf: &mut [f64], fan_in: usize, rng: &mut SplitMix64| {
            let r = 1.0 / (fan_in as f64).sqrt();
            buf.iter_mut().for_each(|x| *x = rng.uniform(-r, r));
        };
        fill(&mut m.embedding[e..], e, &mut rng);
        fill(&mut m.w, e, &mut rng);
        fill(&mut m.u, h, &mut rng);
        fill(&mut m.w_out, h, &mut rng);
        m.b[h..2 * h].iter_mut().for_each(|x| *x = 1.0);
        m
    }

    pub fn with_vocabulary(mut self, vocab: Vocabulary) -> Self {
        self.vocabulary = Some(vocab);
        self
    }

    fn check_sequence(&self, seq: &TokenSequence) -> Result<(), LstmError> {
        if seq.indices.len() != self.dims.sequence_length {
            return Err(LstmError::Dimension(format!(
                "sequence has {} steps, model expects {}",
                seq.indices.len(),
                self.dims.sequence_length
            )));
        }
        if let Some(&bad) = seq.indices.iter().find(|&&i| i > self.dims.vocab_size) {
            return Err(LstmError::Dimension(format!(
                "token index {bad} exceeds vocabulary size {}",
                self.dims.vocab_size
            )));
        }
        Ok(())
    }

    pub fn forward(&self, seq: &TokenSequence) -> Result<ForwardPass, LstmError> {
        self.check_sequence(seq)?;
        Ok(self.forward_unchecked(&seq.indices))
    }

    fn forward_unchecked(&self, tokens: &[usize]) -> ForwardPass {
        let e = self.dims.d_embed;
        let h = self.dims.d_hidden;
        let h4 = GATES * h;
        let mut steps: Vec<StepCache> = Vec::with_capacity(tokens.len());
        let zeros = vec![0.0; h];
        let mut z = vec![0.0; h4];
        for &token in tokens {
            let (h_prev, c_prev) = match steps.last() {
                Some(s) => (&s.h, &s.c),
                None => (&zeros, &zeros),
            };
            z.copy_from_slice(&self.b);
            if token != 0 {
                let x = &self.embedding[token * e..(token + 1) * e];
                for (r, zr) in z.iter_mut().enumerate() {
                    *zr += dot(&self.w[r * e..(r + 1) * e], x);
                }
            }
            for (r, zr) in z.iter_mut().enumerate() {
                *zr += dot(&self.u[r * h..(r + 1) * h], h_prev);
            }
            let mut gates = vec![0.0; h4];
            for j in 0..h {
                gates[j] = sigmoid(z[j]);
                gates[h + j] = sigmoid(z[h + j]);
                gates[2 * h + j] = z[2 * h + j].tanh();
                gates[3 * h + j] = sigmoid(z[3 * h + j]);
            }
            let mut c = vec![0.0; h];
            let mut tanh_c = vec![0.0; h];
            let mut h_new = vec![0.0; h];
            for j in 0..h {
                c[j] = gates[h + j] * c_prev[j] + gates[j] * gates[2 * h + j];
                tanh_c[j] = c[j].tanh();
                h_new[j] = gates[3 * h + j] * tanh_c[j];
            }
            steps.push(StepCache {
                token,
                gates,
                c,
                tanh_c,
                h: h_new,
            });
        }
        let h_last = steps.last().map_or(&zeros, |s| &s.h);
        let logit = dot(&self.w_out, h_last) + self.b_out;
        ForwardPass {
            probability: sigmoid(logit).clamp(PROB_EPS, 1.0 - PROB_EPS),
            logit,
            steps,
        }
    }

    pub fn predict(&self, seq: &TokenSequence) -> Result<f64, LstmError> {
        Ok(self.forward(seq)?.probability)
    }

    /// Preprocesses and encodes raw text with the attached vocabulary.
    pub fn encode_text(&self, text: &str) -> Result<TokenSequence, LstmError> {
        let vocab = self.vocabulary.as_ref().ok_or(LstmError::NoVocabulary)?;
        Ok(encode(&preprocess(text), vocab, self.dims.sequence_length))
    }

    pub fn predict_text(&self, text: &str) -> Result<f64, LstmError> {
        self.predict(&self.encode_text(text)?)
    }

    fn backward_sample(&self, tokens: &[usize], label: Label) -> SampleGradients {
        let e = self.dims.d_embed;
        let h = self.dims.d_hidden;
        let h4 = GATES * h;
        let pass = self.forward_unchecked(tokens);
        let y = label.index() as f64;
        let dlogit = sigmoid(pass.logit) - y;

        let zeros = vec![0.0; h];
        let h_last = pass.steps.last().map_or(&zeros, |s| &s.h);
        let mut g = SampleGradients {
            loss: loss(pass.probability, label),
            correct: (pass.probability >= 0.5) == label.is_phishing(),
            embedding_rows: Vec::new(),
            w: vec![0.0; h4 * e],
            u: vec![0.0; h4 * h],
            b: vec![0.0; h4],
            w_out: h_last.iter().map(|v| dlogit * v).collect(),
            b_out: dlogit,
        };

        let mut dh: Vec<f64> = self.w_out.iter().map(|w| dlogit * w).collect();
        let mut dc = vec![0.0; h];
        let mut dz = vec![0.0; h4];
        for t in (0..pass.steps.len()).rev() {
            let s = &pass.steps[t];
            let (h_prev, c_prev) = if t == 0 {
                (&zeros, &zeros)
            } else {
                (&pass.steps[t - 1].h, &pass.steps[t - 1].c)
            };
            for j in 0..h {
                let (i_g, f_g, g_g, o_g) = (
                    s.gates[j],
                    s.gates[h + j],
                    s.gates[2 * h + j],
                    s.gates[3 * h + j],
                );
                let d_o = dh[j] * s.tanh_c[j];
                dc[j] += dh[j] * o_g * (1.0 - s.tanh_c[j] * s.tanh_c[j]);
                dz[j] = dc[j] * g_g * i_g * (1.0 - i_g);
                dz[h + j] = dc[j] * c_prev[j] * f_g * (1.0 - f_g);
                dz[2 * h + j] = dc[j] * i_g * (1.0 - g_g * g_g);
                dz[3 * h + j] = d_o * o_g * (1.0 - o_g);
                dc[j] *= f_g;
            }
            add_into(&mut g.b, &dz);
            for (r, &dzr) in dz.iter().enumerate() {
                axpy(&mut g.u[r * h..(r + 1) * h], dzr, h_prev);
            }
            if s.token != 0 {
                let x = &self.embedding[s.token * e..(s.token + 1) * e];
                let mut dx = vec![0.0; e];
                for (r, &dzr) in dz.iter().enumerate() {
                    axpy(&mut g.w[r * e..(r + 1) * e], dzr, x);
                    axpy(&mut dx, dzr, &self.w[r * e..(r + 1) * e]);
                }
                g.embedding_rows.push((s.token, dx));
            }
            dh.iter_mut().for_each(|v| *v = 0.0);
            for (r, &dzr) in dz.iter().enumerate() {
                axpy(&mut dh, dzr, &self.u[r * h..(r + 1) * h]);
            }
        }
        g
    }

    /// Mean loss and its gradient over a batch. Examples run in parallel;
    /// their gradients are summed in batch order.
    pub fn loss_and_gradients(
        &self,
        batch: &[(&TokenSequence, Label)],
    ) -> Result<(f64, Gradients), LstmError> {
        for (seq, _) in batch {
            self.check_sequence(seq)?;
        }
        let (loss, _, grads) = self.batch_gradients(batch);
        Ok((loss, grads))
    }

    fn batch_gradients(&self, batch: &[(&TokenSequence, Label)]) -> (f64, usize, Gradients) {
        let samples: Vec<SampleGradients> = batch
            .par_iter()
            .map(|(seq, y)| self.backward_sample(&seq.indices, *y))
            .collect();
        let mut grads = Gradients::zeros(&self.dims);
        let mut total = 0.0;
        let mut correct = 0;
        for s in &samples {
            grads.add_sample(s, self.dims.d_embed);
            total += s.loss;
            correct += s.correct as usize;
        }
        let n = batch.len().max(1) as f64;
        grads.scale(1.0 / n);
        grads.embedding[..self.dims.d_embed]
            .iter_mut()
            .for_each(|x| *x = 0.0);
        (total / n, correct, grads)
    }

    fn param_mut(&mut self, tensor: &str, k: usize) -> &mut f64 {
        match tensor {
            "embedding" => &mut self.embedding[k],
            "w" => &mut self.w[k],
            "u" => &mut self.u[k],
            "b" => &mut self.b[k],
            "w_out" => &mut self.w_out[k],
            _ => &mut self.b_out,
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.embedding.len() + self.w.len() + self.u.len() + self.b.len() + self.w_out.len() + 1
    }

    /// `(loss, accuracy)` over labeled sequences at threshold 0.5.
    pub fn evaluate(&self, data: &[(TokenSequence, Label)]) -> Result<(f64, f64), LstmError> {
        if data.is_empty() {
            return Ok((0.0, 0.0));
        }
        for (seq, _) in data {
            self.check_sequence(seq)?;
        }
        let preds: Vec<f64> = data
            .par_iter()
            .map(|(seq, _)| self.forward_unchecked(&seq.indices).probability)
            .collect();
        let pairs: Vec<(f64, Label)> = preds
            .iter()
            .copied()
            .zip(data.iter().map(|d| d.1))
            .collect();
        let correct = pairs
            .iter()
            .filter(|(p, y)| (*p >= 0.5) == y.is_phishing())
            .count();
        Ok((mean_loss(&pairs), correct as f64 / data.len() as f64))
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(dst: &mut [f64], k: f64, src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += k * s);
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Seeds the validation split and the per-epoch shuffles.
    pub seed: u64,
    /// Share held out for validation; `0.0` trains on everything.
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 60,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            validation_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Mean of the batch losses seen during the epoch.
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub metrics: Vec<EpochMetrics>,
    pub train_indices: Vec<usize>,
    pub validation_indices: Vec<usize>,
}

impl TrainReport {
    /// One JSON object per epoch, newline-separated.
    pub fn metrics_jsonl(&self) -> String {
        self.metrics
            .iter()
            .map(|m| serde_json::to_string(m).expect("metrics serialize") + "\n")
            .collect()
    }
}

struct Adam {
    m: Gradients,
    v: Gradients,
    t: i32,
}

impl Adam {
    fn new(dims: &LstmDims) -> Self {
        Self {
            m: Gradients::zeros(dims),
            v: Gradients::zeros(dims),
            t: 0,
        }
    }

    fn step(&mut self, model: &mut LstmModel, g: &Gradients, cfg: &TrainConfig) {
        self.t += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.t);
        let bc2 = 1.0 - cfg.beta2.powi(self.t);
        let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            for k in 0..p.len() {
                m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
                v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                p[k] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
            }
        };
        let e = model.dims.d_embed;
        update(
            &mut model.embedding[e..],
            &g.embedding[e..],
            &mut self.m.embedding[e..],
            &mut self.v.embedding[e..],
        );
        update(&mut model.w, &g.w, &mut self.m.w, &mut self.v.w);
        update(&mut model.u, &g.u, &mut self.m.u, &mut self.v.u);
        update(&mut model.b, &g.b, &mut self.m.b, &mut self.v.b);
        update(
            &mut model.w_out,
            &g.w_out,
            &mut self.m.w_out,
            &mut self.v.w_out,
        );
        update(
            std::slice::from_mut(&mut model.b_out),
            &[g.b_out],
            std::slice::from_mut(&mut self.m.b_out),
            std::slice::from_mut(&mut self.v.b_out),
        );
    }
}

/// Trains in place. The dataset is split by [`stratified_split`] into
/// training and validation parts; each epoch shuffles the training part
/// with a stream seeded by `mix_seed(seed, epoch)`.
pub fn train(
    model: &mut LstmModel,
    dataset: &[(TokenSequence, Label)],
    config: &TrainConfig,
) -> Result<TrainReport, LstmError> {
    if config.epochs == 0 || config.batch_size == 0 {
        return Err(LstmError::Training(
            "epochs and batch_size must be at least 1".into(),
        ));
    }
    if !(0.0..1.0).contains(&config.validation_fraction) {
        return Err(LstmError::Training(
            "validation_fraction must be in [0, 1)".into(),
        ));
    }
    let labels: Vec<Label> = dataset.iter().map(|d| d.1).collect();
    if !labels.contains(&Label::Phishing) || !labels.contains(&Label::Legitimate) {
        return Err(LstmError::Training("both classes must be present".into()));
    }
    for (seq, _) in dataset {
        model.check_sequence(seq)?;
    }
    let (train_idx, val_idx) =
        stratified_split(&labels, 1.0 - config.validation_fraction, config.seed);
    let validation: Vec<(TokenSequence, Label)> =
        val_idx.iter().map(|&i| dataset[i].clone()).collect();

    let mut adam = Adam::new(&model.dims);
    let mut metrics = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut order = train_idx.clone();
        SplitMix64::new(mix_seed(config.seed, epoch as u64)).shuffle(&mut order);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        let mut n_batches = 0usize;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<(&TokenSequence, Label)> = chunk
                .iter()
                .map(|&i| (&dataset[i].0, dataset[i].1))
                .collect();
            let (batch_loss, batch_correct, grads) = model.batch_gradients(&batch);
            if !batch_loss.is_finite() {
                return Err(LstmError::Divergence { epoch, batch: b });
            }
            adam.step(model, &grads, config);
            loss_sum += batch_loss;
            correct += batch_correct;
            n_batches += 1;
        }
        let (val_loss, val_accuracy) = if validation.is_empty() {
            (None, None)
        } else {
            let (l, a) = model.evaluate(&validation)?;
            (Some(l), Some(a))
        };
        metrics.push(EpochMetrics {
            epoch: epoch + 1,
            train_loss: loss_sum / n_batches.max(1) as f64,
            train_accuracy: correct as f64 / train_idx.len().max(1) as f64,
            val_loss,
            val_accuracy,
        });
    }
    Ok(TrainReport {
        metrics,
        train_indices: train_idx,
        validation_indices: val_idx,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientCheck {
    pub max_relative_error: f64,
    /// Worst error per tensor, in the order embedding, w, u, b, w_out, b_out.
    pub per_tensor: Vec<(String, f64)>,
    pub checked: usize,
}

/// Finite-difference step used by [`gradient_check`].
pub const GRADCHECK_STEP: f64 = 1e-4;
/// Denominator floor of the relative error `|a - n| / max(|a|, |n|, floor)`.
pub const GRADCHECK_FLOOR: f64 = 1e-6;

/// Compares analytic gradients with central differences over every entry
/// of every parameter tensor.
pub fn gradient_check(
    model: &LstmModel,
    batch: &[(TokenSequence, Label)],
) -> Result<GradientCheck, LstmError> {
    let refs: Vec<(&TokenSequence, Label)> = batch.iter().map(|(s, y)| (s, *y)).collect();
    let (_, analytic) = model.loss_and_gradients(&refs)?;
    let batch_loss = |m: &LstmModel| -> f64 {
        let pairs: Vec<(f64, Label)> = batch
            .iter()
            .map(|(s, y)| (m.forward_unchecked(&s.indices).probability, *y))
            .collect();
        mean_loss(&pairs)
    };

    let mut probe = model.clone();
    let mut per_tensor = Vec::new();
    let mut checked = 0;
    let e = model.dims.d_embed;
    let tensors: [(&str, &[f64]); 6] = [
        ("embedding", &analytic.embedding),
        ("w", &analytic.w),
        ("u", &analytic.u),
        ("b", &analytic.b),
        ("w_out", &analytic.w_out),
        ("b_out", std::slice::from_ref(&analytic.b_out)),
    ];
    for (name, grad) in tensors {
        let mut worst: f64 = 0.0;
        let start = if name == "embedding" { e } else { 0 };
        for (k, &a) in grad.iter().enumerate().skip(start) {
            let original = *probe.param_mut(name, k);
            *probe.param_mut(name, k) = original + GRADCHECK_STEP;
            let plus = batch_loss(&probe);
            *probe.param_mut(name, k) = original - GRADCHECK_STEP;
            let minus = batch_loss(&probe);
            *probe.param_mut(name, k) = original;
            let numeric = (plus - minus) / (2.0 * GRADCHECK_STEP);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(GRADCHECK_FLOOR);
            worst = worst.max(rel);
            checked += 1;
        }
        per_tensor.push((name.to_string(), worst));
    }
    let max_relative_error = per_tensor.iter().map(|(_, e)| *e).fold(0.0, f64::max);
    Ok(GradientCheck {
        max_relative_error,
        per_tensor,
        checked,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    dims: LstmDims,
    /// Path of the vocabulary JSON, relative to the model file.
    vocabulary: Option<String>,
    embedding: Tensor,
    w_i: Tensor,
    w_f: Tensor,
    w_g: Tensor,
    w_o: Tensor,
    u_i: Tensor,
    u_f: Tensor,
    u_g: Tensor,
    u_o: Tensor,
    b_i: Vec<f64>,
    b_f: Vec<f64>,
    b_g: Vec<f64>,
    b_o: Vec<f64>,
    w_out: Vec<f64>,
    b_out: f64,
}

impl LstmModel {
    /// Gate block of a stacked `4H × cols` matrix, transposed to `cols × H`.
    fn gate_tensor(stacked: &[f64], gate: usize, h: usize, cols: usize) -> Tensor {
        let mut data = vec![0.0; cols * h];
        for j in 0..h {
            for c in 0..cols {
                data[c * h + j] = stacked[(gate * h + j) * cols + c];
            }
        }
        Tensor {
            shape: vec![cols, h],
            data,
        }
    }

    fn stack_gates(tensors: [&Tensor; 4], h: usize, cols: usize) -> Result<Vec<f64>, LstmError> {
        let mut stacked = vec![0.0; GATES * h * cols];
        for (gate, t) in tensors.iter().enumerate() {
            if t.shape != [cols, h] || t.data.len() != cols * h {
                return Err(LstmError::Format(format!(
                    "gate tensor has shape {:?}, expected [{cols}, {h}]",
                    t.shape
                )));
            }
            for j in 0..h {
                for c in 0..cols {
                    stacked[(gate * h + j) * cols + c] = t.data[c * h + j];
                }
            }
        }
        Ok(stacked)
    }

    fn to_file(&self, vocabulary: Option<String>) -> ModelFile {
        let LstmDims {
            d_embed: e,
            d_hidden: h,
            vocab_size,
            ..
        } = self.dims;
        let gate_bias = |g: usize| self.b[g * h..(g + 1) * h].to_vec();
        ModelFile {
            dims: self.dims,
            vocabulary,
            embedding: Tensor {
                shape: vec![vocab_size + 1, e],
                data: self.embedding.clone(),
            },
            w_i: Self::gate_tensor(&self.w, 0, h, e),
            w_f: Self::gate_tensor(&self.w, 1, h, e),
            w_g: Self::gate_tensor(&self.w, 2, h, e),
            w_o: Self::gate_tensor(&self.w, 3, h, e),
            u_i: Self::gate_tensor(&self.u, 0, h, h),
            u_f: Self::gate_tensor(&self.u, 1, h, h),
            u_g: Self::gate_tensor(&self.u, 2, h, h),
            u_o: Self::gate_tensor(&self.u, 3, h, h),
            b_i: gate_bias(0),
            b_f: gate_bias(1),
            b_g: gate_bias(2),
            b_o: gate_bias(3),
            w_out: self.w_out.clone(),
            b_out: self.b_out,
        }
    }

    fn from_file(f: ModelFile) -> Result<Self, LstmError> {
        let LstmDims {
            d_embed: e,
            d_hidden: h,
            vocab_size,
            ..
        } = f.dims;
        if f.embedding.data.len() != (vocab_size + 1) * e {
            return Err(LstmError::Format(
                "embedding size does not match dims".into(),
            ));
        }
        let mut b = Vec::with_capacity(GATES * h);
        for part in [&f.b_i, &f.b_f, &f.b_g, &f.b_o] {
            if part.len() != h {
                return Err(LstmError::Format("bias size does not match dims".into()));
            }
            b.extend_from_slice(part);
        }
        if f.w_out.len() != h {
            return Err(LstmError::Format(
                "output weight size does not match dims".into(),
            ));
        }
        let model = Self {
            dims: f.dims,
            embedding: f.embedding.data,
            w: Self::stack_gates([&f.w_i, &f.w_f, &f.w_g, &f.w_o], h, e)?,
            u: Self::stack_gates([&f.u_i, &f.u_f, &f.u_g, &f.u_o], h, h)?,
            b,
            w_out: f.w_out,
            b_out: f.b_out,
            vocabulary: None,
        };
        let finite = [&model.embedding, &model.w, &model.u, &model.b, &model.w_out]
            .iter()
            .all(|t| t.iter().all(|x| x.is_finite()))
            && model.b_out.is_finite();
        if !finite {
            return Err(LstmError::Format("non-finite weight".into()));
        }
        if model.embedding[..e].iter().any(|&x| x != 0.0) {
            return Err(LstmError::Format(
                "padding embedding row must be zero".into(),
            ));
        }
        Ok(model)
    }

    /// Model JSON without the vocabulary.
    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_file(None)).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, LstmError> {
        let file: ModelFile =
            serde_json::from_str(s).map_err(|e| LstmError::Format(e.to_string()))?;
        Self::from_file(file)
    }

    /// Writes `path` and, if a vocabulary is attached, `vocab.json` beside it.
    pub fn save(&self, path: &Path) -> Result<(), LstmError> {
        let dir = path.parent().unwrap_or(Path::new("."));
        let vocab_ref = match &self.vocabulary {
            Some(v) => {
                let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("model");
                let name = format!("{stem}.vocab.json");
                std::fs::write(dir.join(&name), v.to_json())?;
                Some(name)
            }
            None => None,
        };
        let json = serde_json::to_string(&self.to_file(vocab_ref)).expect("model serializes");
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, LstmError> {
        let text = std::fs::read_to_string(path)?;
        let file: ModelFile =
            serde_json::from_str(&text).map_err(|e| LstmError::Format(e.to_string()))?;
        let vocab_ref = file.vocabulary.clone();
        let mut model = Self::from_file(file)?;
        if let Some(name) = vocab_ref {
            let dir = path
                .parent()
                .map(Path::to_path_buf)
                .unwrap_or_else(|| PathBuf::from("."));
            let vocab = Vocabulary::from_json(&std::fs::read_to_string(dir.join(name))?)?;
            if vocab.len() != model.dims.vocab_size {
                return Err(LstmError::Format(format!(
                    "vocabulary has {} words, model expects {}",
                    vocab.len(),
                    model.dims.vocab_size
                )));
            }
            model.vocabulary = Some(vocab);
        }
        Ok(model)
    }
}
