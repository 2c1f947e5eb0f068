use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{self, Dims, Feeding, Mutation, Params, Tensor, TENSOR_NAMES};
use super::vocab::{build_vocab, Vocabulary, EOS};
use super::Seq2SeqError;
use crate::corpus::{ParallelCorpus, Split};

pub const CHECKPOINT_VERSION: u32 = 1;

const INIT_SCALE: f64 = 0.08;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    #[default]
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Cap on characters per side, counted after normalization.
    pub max_len: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Probability of feeding the gold previous symbol to the decoder.
    pub teacher_forcing: f64,
    pub clip_norm: f64,
    pub optimizer: Optimizer,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            max_len: 40,
            embed_dim: 64,
            hidden_dim: 128,
            learning_rate: 1e-3,
            batch_size: 32,
            seed: 0,
            teacher_forcing: 1.0,
            clip_norm: 5.0,
            optimizer: Optimizer::Adam,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), Seq2SeqError> {
        let bad = |m: &str| Err(Seq2SeqError::InvalidConfig(m.to_string()));
        if self.epochs < 1 {
            return bad("epochs must be at least 1");
        }
        if self.max_len < 2 {
            return bad("max_len must be at least 2");
        }
        if self.embed_dim < 1 || self.hidden_dim < 1 || self.batch_size < 1 {
            return bad("embed_dim, hidden_dim and batch_size must be at least 1");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be a positive number");
        }
        if !(0.0..=1.0).contains(&self.teacher_forcing) {
            return bad("teacher_forcing must lie in [0, 1]");
        }
        if !(self.clip_norm.is_finite() && self.clip_norm > 0.0) {
            return bad("clip_norm must be a positive number");
        }
        Ok(())
    }

    /// Row label in the style "7 ep., length 35".
    pub fn label(&self) -> String {
        format!("{} ep., length {}", self.epochs, self.max_len)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainLog {
    /// Mean per-character cross-entropy over each epoch.
    pub epoch_losses: Vec<f64>,
    /// Examples with at least one side cut to `max_len`.
    pub truncated: usize,
    pub steps: usize,
}

/// Source and target ids, each ending in EOS.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedExample {
    pub src: Vec<usize>,
    pub tgt: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Seq2SeqModel {
    pub vocab: Vocabulary,
    pub config: TrainConfig,
    pub params: Params,
}

fn truncate(text: &str, max_len: usize) -> (&str, bool) {
    match text.char_indices().nth(max_len) {
        Some((at, _)) => (&text[..at], true),
        None => (text, false),
    }
}

impl Seq2SeqModel {
    /// A freshly initialized model.
    pub fn init(vocab: Vocabulary, config: TrainConfig) -> Result<Self, Seq2SeqError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let dims = Dims {
            vocab: vocab.len(),
            embed: config.embed_dim,
            hidden: config.hidden_dim,
        };
        let params = Params::init(dims, INIT_SCALE, &mut rng);
        Ok(Seq2SeqModel {
            vocab,
            config,
            params,
        })
    }

    /// Encodes a pair under the length cap; the flag reports truncation.
    pub fn encode_pair(&self, source: &str, target: &str) -> (EncodedExample, bool) {
        let (s, cut_s) = truncate(source, self.config.max_len);
        let (t, cut_t) = truncate(target, self.config.max_len);
        let mut src = self.vocab.encode(s);
        src.push(EOS);
        let mut tgt = self.vocab.encode(t);
        tgt.push(EOS);
        (EncodedExample { src, tgt }, cut_s || cut_t)
    }

    pub fn predict(&self, input: &str) -> String {
        let (s, _) = truncate(input, self.config.max_len);
        let mut src = self.vocab.encode(s);
        src.push(EOS);
        self.vocab
            .decode(&network::greedy(&self.params, &src, self.config.max_len))
    }

    pub fn predict_all<S: AsRef<str>>(&self, inputs: &[S]) -> Vec<String> {
        inputs.iter().map(|s| self.predict(s.as_ref())).collect()
    }

    /// Mean per-character loss with gold decoder inputs.
    pub fn mean_loss(&self, examples: &[EncodedExample]) -> f64 {
        let (sum, n) = examples.iter().fold((0.0, 0usize), |(s, n), e| {
            let (l, k) = network::loss(&self.params, &e.src, &e.tgt);
            (s + l, n + k)
        });
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }

    pub fn to_json(&self) -> String {
        let tensors: BTreeMap<&str, &Tensor> = TENSOR_NAMES
            .iter()
            .copied()
            .zip(&self.params.tensors)
            .collect();
        let envelope = serde_json::json!({
            "format_version": CHECKPOINT_VERSION,
            "vocab": self.vocab,
            "config": self.config,
            "tensors": tensors,
        });
        serde_json::to_string(&envelope).expect("checkpoint serializes")
    }

    pub fn from_json(json: &str) -> Result<Self, Seq2SeqError> {
        #[derive(Deserialize)]
        struct Envelope {
            format_version: u32,
            vocab: Vocabulary,
            config: TrainConfig,
            tensors: BTreeMap<String, Tensor>,
        }
        let bad = |m: String| Seq2SeqError::Checkpoint(m);
        let version: serde_json::Value =
            serde_json::from_str(json).map_err(|e| bad(e.to_string()))?;
        match version.get("format_version").and_then(|v| v.as_u64()) {
            Some(v) if v == u64::from(CHECKPOINT_VERSION) => {}
            Some(v) => return Err(bad(format!("unsupported format_version {v}"))),
            None => return Err(bad("missing format_version".into())),
        }
        let env: Envelope = serde_json::from_value(version).map_err(|e| bad(e.to_string()))?;
        debug_assert_eq!(env.format_version, CHECKPOINT_VERSION);
        env.config.validate()?;
        let dims = Dims {
            vocab: env.vocab.len(),
            embed: env.config.embed_dim,
            hidden: env.config.hidden_dim,
        };
        let mut tensors = env.tensors;
        let mut params = Vec::with_capacity(TENSOR_NAMES.len());
        for (name, (rows, cols)) in TENSOR_NAMES.iter().zip(Params::shapes(dims)) {
            let t = tensors
                .remove(*name)
                .ok_or_else(|| bad(format!("missing tensor {name}")))?;
            if t.rows != rows || t.cols != cols || t.data.len() != rows * cols {
                return Err(bad(format!(
                    "tensor {name} has shape {}x{} ({} values), expected {rows}x{cols}",
                    t.rows,
                    t.cols,
                    t.data.len()
                )));
            }
            if !t.is_finite() {
                return Err(bad(format!("tensor {name} contains non-finite values")));
            }
            params.push(t);
        }
        if let Some(extra) = tensors.keys().next() {
            return Err(bad(format!("unknown tensor {extra}")));
        }
        Ok(Seq2SeqModel {
            vocab: env.vocab,
            config: env.config,
            params: Params { tensors: params },
        })
    }
}

struct Adam {
    m: Params,
    v: Params,
    t: i32,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

fn step(params: &mut Params, grads: &Params, config: &TrainConfig, adam: &mut Option<Adam>) {
    match adam {
        None => {
            for (p, g) in params.tensors.iter_mut().zip(&grads.tensors) {
                for (w, d) in p.data.iter_mut().zip(&g.data) {
                    *w -= config.learning_rate * d;
                }
            }
        }
        Some(state) => {
            state.t += 1;
            let c1 = 1.0 - BETA1.powi(state.t);
            let c2 = 1.0 - BETA2.powi(state.t);
            let lr = config.learning_rate;
            for (((p, g), m), v) in params
                .tensors
                .iter_mut()
                .zip(&grads.tensors)
                .zip(&mut state.m.tensors)
                .zip(&mut state.v.tensors)
            {
                for i in 0..p.data.len() {
                    let d = g.data[i];
                    m.data[i] = BETA1 * m.data[i] + (1.0 - BETA1) * d;
                    v.data[i] = BETA2 * v.data[i] + (1.0 - BETA2) * d * d;
                    p.data[i] -= lr * (m.data[i] / c1) / ((v.data[i] / c2).sqrt() + EPS);
                }
            }
        }
    }
}

/// Trains on the `train` split of a labeled corpus, or on every example of an
/// unlabeled one. Fully determined by the corpus and `config`.
pub fn train(
    corpus: &ParallelCorpus,
    config: &TrainConfig,
) -> Result<(Seq2SeqModel, TrainLog), Seq2SeqError> {
    config.validate()?;
    let data = if corpus.is_labeled() {
        corpus.part(Split::Train)
    } else {
        corpus.clone()
    };
    let vocab = build_vocab(&data)?;
    let mut model = Seq2SeqModel::init(vocab, config.clone())?;

    let mut truncated = 0;
    let examples: Vec<EncodedExample> = data
        .examples
        .iter()
        .map(|e| {
            let (enc, cut) = model.encode_pair(&e.source, &e.target);
            truncated += usize::from(cut);
            enc
        })
        .collect();

    let dims = model.params.dims();
    let mut grads = Params::zeros(dims);
    let mut adam = (config.optimizer == Optimizer::Adam).then(|| Adam {
        m: Params::zeros(dims),
        v: Params::zeros(dims),
        t: 0,
    });
    // Separate streams so changing the feeding ratio does not change the data order.
    let mut order_rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut feed_rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(2));
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut steps = 0;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut order_rng);
        let (mut epoch_loss, mut epoch_tokens) = (0.0, 0usize);
        for (batch_no, batch) in order.chunks(config.batch_size).enumerate() {
            let tokens: usize = batch.iter().map(|&i| examples[i].tgt.len()).sum();
            let scale = 1.0 / tokens as f64;
            grads.fill_zero();
            for &i in batch {
                let ex = &examples[i];
                let own: Vec<bool>;
                let feeding = if config.teacher_forcing >= 1.0 {
                    Feeding::Teacher
                } else {
                    own = (0..ex.tgt.len())
                        .map(|_| feed_rng.random::<f64>() >= config.teacher_forcing)
                        .collect();
                    Feeding::Mixed(&own)
                };
                let (l, _) = network::forward_backward(
                    &model.params,
                    &mut grads,
                    &ex.src,
                    &ex.tgt,
                    scale,
                    feeding,
                    Mutation::None,
                );
                epoch_loss += l;
            }
            epoch_tokens += tokens;
            let norm = grads.norm();
            if !norm.is_finite() || !epoch_loss.is_finite() {
                return Err(Seq2SeqError::Divergence {
                    epoch,
                    batch: batch_no + 1,
                });
            }
            if norm > config.clip_norm {
                grads.scale(config.clip_norm / norm);
            }
            step(&mut model.params, &grads, config, &mut adam);
            steps += 1;
            if !model.params.is_finite() {
                return Err(Seq2SeqError::Divergence {
                    epoch,
                    batch: batch_no + 1,
                });
            }
        }
        epoch_losses.push(if epoch_tokens == 0 {
            0.0
        } else {
            epoch_loss / epoch_tokens as f64
        });
    }
    Ok((
        model,
        TrainLog {
            epoch_losses,
            truncated,
            steps,
        },
    ))
}

/// Analytic against central-difference gradients for one tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorCheck {
    pub name: &'static str,
    pub checked: usize,
    pub max_relative_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheck {
    pub tensors: Vec<TensorCheck>,
    pub max_relative_error: f64,
    /// Largest absolute analytic gradient seen; zero when the objective is empty.
    pub max_abs_gradient: f64,
}

const FD_STEP: f64 = 1e-5;
/// Denominator floor, so coordinates with vanishing gradient are compared absolutely.
const REL_FLOOR: f64 = 1e-6;

pub fn gradient_check(
    model: &Seq2SeqModel,
    batch: &[EncodedExample],
    per_tensor: usize,
    seed: u64,
) -> GradientCheck {
    gradient_check_with(model, batch, per_tensor, seed, Mutation::None)
}

/// Loss is the sum of per-character cross-entropies over `batch` with gold
/// decoder inputs. Up to `per_tensor` coordinates are sampled per tensor,
/// preferring coordinates with non-zero analytic gradient.
pub fn gradient_check_with(
    model: &Seq2SeqModel,
    batch: &[EncodedExample],
    per_tensor: usize,
    seed: u64,
    mutation: Mutation,
) -> GradientCheck {
    let dims = model.params.dims();
    let mut grads = Params::zeros(dims);
    for ex in batch {
        network::forward_backward(
            &model.params,
            &mut grads,
            &ex.src,
            &ex.tgt,
            1.0,
            Feeding::Teacher,
            mutation,
        );
    }
    let logits = |p: &Params| {
        batch
            .iter()
            .map(|e| network::scored_logits(p, &e.src, &e.tgt))
            .collect::<Vec<_>>()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = model.params.clone();
    let mut report = GradientCheck {
        tensors: Vec::new(),
        max_relative_error: 0.0,
        max_abs_gradient: 0.0,
    };
    for (ti, name) in TENSOR_NAMES.iter().enumerate() {
        let g = &grads.tensors[ti].data;
        let (mut live, mut dead): (Vec<usize>, Vec<usize>) =
            (0..g.len()).partition(|&i| g[i] != 0.0);
        live.shuffle(&mut rng);
        dead.shuffle(&mut rng);
        let mut coords: Vec<usize> = live.into_iter().take(per_tensor).collect();
        let fill = per_tensor.saturating_sub(coords.len());
        coords.extend(dead.into_iter().take(fill));

        let mut worst: f64 = 0.0;
        for &i in &coords {
            let original = probe.tensors[ti].data[i];
            probe.tensors[ti].data[i] = original + FD_STEP;
            let plus = logits(&probe);
            probe.tensors[ti].data[i] = original - FD_STEP;
            let minus = logits(&probe);
            probe.tensors[ti].data[i] = original;
            let delta: f64 = plus
                .iter()
                .zip(&minus)
                .map(|(a, b)| network::loss_difference(a, b))
                .sum();
            let numeric = delta / (2.0 * FD_STEP);
            let analytic = g[i];
            let rel = (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(REL_FLOOR);
            worst = worst.max(rel);
            report.max_abs_gradient = report.max_abs_gradient.max(analytic.abs());
        }
        report.max_relative_error = report.max_relative_error.max(worst);
        report.tensors.push(TensorCheck {
            name,
            checked: coords.len(),
            max_relative_error: worst,
        });
    }
    report
}
