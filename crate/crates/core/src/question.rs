//! Question tokenization, the trainable question encoder and the hop-count
//! classifier.
//!
//! Both models mean-pool token embeddings. The encoder passes the pooled
//! vector through a rectified hidden layer and an output layer of width
//! `2d`, read as the real and imaginary halves of a complex question
//! embedding. The classifier applies a single affine layer and a softmax
//! over the three hop classes.

use std::path::Path;

use indexmap::IndexSet;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::container::{self, CheckpointError, Decoder, Encoder};
use crate::kg::vocab_hash;
use crate::kge::ComplexVector;

#[derive(Debug, Error)]
pub enum QuestionError {
    #[error("training data has no examples of {0}-hop questions")]
    MissingClass(u8),
    #[error("hop label {0} outside 1..=3")]
    BadLabel(u8),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

pub type Result<T, E = QuestionError> = std::result::Result<T, E>;

pub const NUM_HOP_CLASSES: usize = 3;
pub const UNKNOWN_TOKEN: &str = "<unk>";

/// Lowercased word tokens. Splits on whitespace and punctuation; a hyphen
/// stays inside a token when both neighbours are alphanumeric.
pub fn tokenize(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut current = String::new();
    for (i, &c) in chars.iter().enumerate() {
        let keep = c.is_alphanumeric()
            || (c == '-'
                && i > 0
                && chars[i - 1].is_alphanumeric()
                && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric()));
        if keep {
            current.extend(c.to_lowercase());
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// Dense token indices; index 0 is reserved for unknown tokens.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenVocabulary {
    tokens: IndexSet<String>,
}

impl Default for TokenVocabulary {
    fn default() -> Self {
        let mut tokens = IndexSet::new();
        tokens.insert(UNKNOWN_TOKEN.to_owned());
        Self { tokens }
    }
}

impl TokenVocabulary {
    pub fn build<'a>(corpus: impl IntoIterator<Item = &'a str>) -> Self {
        let mut vocab = Self::default();
        for text in corpus {
            for tok in tokenize(text) {
                vocab.tokens.insert(tok);
            }
        }
        vocab
    }

    fn from_tokens(tokens: Vec<String>) -> std::result::Result<Self, CheckpointError> {
        if tokens.first().map(String::as_str) != Some(UNKNOWN_TOKEN) {
            return Err(CheckpointError::Corrupt("vocabulary must start with <unk>".into()));
        }
        let n = tokens.len();
        let tokens: IndexSet<String> = tokens.into_iter().collect();
        if tokens.len() != n {
            return Err(CheckpointError::Corrupt("duplicate vocabulary token".into()));
        }
        Ok(Self { tokens })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() <= 1
    }

    pub fn index(&self, token: &str) -> usize {
        self.tokens.get_index_of(token).unwrap_or(0)
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        self.tokens.get_index(index).map(String::as_str)
    }

    pub fn encode(&self, text: &str) -> Vec<usize> {
        tokenize(text).iter().map(|t| self.index(t)).collect()
    }

    pub fn hash(&self) -> u64 {
        vocab_hash(self.tokens.iter().map(String::as_str))
    }

    fn iter(&self) -> impl ExactSizeIterator<Item = &str> {
        self.tokens.iter().map(String::as_str)
    }
}

fn uniform(rng: &mut impl Rng, n: usize, bound: f32) -> Vec<f32> {
    (0..n).map(|_| rng.gen_range(-bound..=bound)).collect()
}

fn xavier(rng: &mut impl Rng, rows: usize, cols: usize) -> Vec<f32> {
    uniform(rng, rows * cols, (6.0 / (rows + cols) as f32).sqrt())
}

/// Mean of the embedding rows of `tokens`; zero for empty input.
fn mean_pool(emb: &[f32], width: usize, tokens: &[usize]) -> Vec<f64> {
    let mut pooled = vec![0.0; width];
    if tokens.is_empty() {
        return pooled;
    }
    for &t in tokens {
        for (p, &v) in pooled.iter_mut().zip(&emb[t * width..(t + 1) * width]) {
            *p += v as f64;
        }
    }
    let n = tokens.len() as f64;
    pooled.iter_mut().for_each(|p| *p /= n);
    pooled
}

/// `w · x + b` for a row-major `rows x x.len()` matrix.
fn affine(w: &[f32], b: &[f32], x: &[f64]) -> Vec<f64> {
    let cols = x.len();
    b.iter()
        .enumerate()
        .map(|(r, &bias)| {
            let row = &w[r * cols..(r + 1) * cols];
            bias as f64 + row.iter().zip(x).map(|(&a, &v)| a as f64 * v).sum::<f64>()
        })
        .collect()
}

/// Accumulates the backward pass of `affine`; returns `d x`.
fn affine_backward(w: &[f32], x: &[f64], dy: &[f64], dw: &mut [f64], db: &mut [f64]) -> Vec<f64> {
    let cols = x.len();
    let mut dx = vec![0.0; cols];
    for (r, &g) in dy.iter().enumerate() {
        db[r] += g;
        let row = &w[r * cols..(r + 1) * cols];
        let drow = &mut dw[r * cols..(r + 1) * cols];
        for c in 0..cols {
            drow[c] += g * x[c];
            dx[c] += g * row[c] as f64;
        }
    }
    dx
}

fn pool_backward(tokens: &[usize], width: usize, dpooled: &[f64], demb: &mut [f64]) {
    if tokens.is_empty() {
        return;
    }
    let n = tokens.len() as f64;
    for &t in tokens {
        for (d, &g) in demb[t * width..(t + 1) * width].iter_mut().zip(dpooled) {
            *d += g / n;
        }
    }
}

/// Dense gradients laid out like a model's parameter tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients(pub Vec<Vec<f64>>);

impl Gradients {
    fn zeros_like(shapes: &[usize]) -> Self {
        Self(shapes.iter().map(|&n| vec![0.0; n]).collect())
    }

    pub fn scale(&mut self, factor: f64) {
        for t in &mut self.0 {
            t.iter_mut().for_each(|v| *v *= factor);
        }
    }
}

/// Mean-pool encoder mapping a token sequence to a complex vector in `C^d`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuestionEncoder {
    vocab: TokenVocabulary,
    width: usize,
    dim: usize,
    hops: u8,
    entity_hash: u64,
    token_embeddings: Vec<f32>,
    hidden_w: Vec<f32>,
    hidden_b: Vec<f32>,
    output_w: Vec<f32>,
    output_b: Vec<f32>,
}

/// Intermediate values of one encoder forward pass.
pub struct EncoderTrace {
    pooled: Vec<f64>,
    pre_hidden: Vec<f64>,
    hidden: Vec<f64>,
    pub output: Vec<f64>,
}

impl QuestionEncoder {
    pub fn new<R: Rng>(vocab: TokenVocabulary, width: usize, dim: usize, rng: &mut R) -> Self {
        let v = vocab.len();
        Self {
            token_embeddings: uniform(rng, v * width, 0.1),
            hidden_w: xavier(rng, width, width),
            hidden_b: vec![0.0; width],
            output_w: xavier(rng, 2 * dim, width),
            output_b: vec![0.0; 2 * dim],
            vocab,
            width,
            dim,
            hops: 0,
            entity_hash: 0,
        }
    }

    pub fn vocab(&self) -> &TokenVocabulary {
        &self.vocab
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Complex dimension `d`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Hop class this encoder was trained for (0 if unset).
    pub fn hops(&self) -> u8 {
        self.hops
    }

    pub fn set_hops(&mut self, hops: u8) {
        self.hops = hops;
    }

    /// Entity-vocabulary hash of the graph whose embeddings it was trained against.
    pub fn entity_hash(&self) -> u64 {
        self.entity_hash
    }

    pub fn set_entity_hash(&mut self, hash: u64) {
        self.entity_hash = hash;
    }

    pub fn parameters(&self) -> [&[f32]; 5] {
        [
            &self.token_embeddings,
            &self.hidden_w,
            &self.hidden_b,
            &self.output_w,
            &self.output_b,
        ]
    }

    pub fn parameters_mut(&mut self) -> [&mut [f32]; 5] {
        [
            &mut self.token_embeddings,
            &mut self.hidden_w,
            &mut self.hidden_b,
            &mut self.output_w,
            &mut self.output_b,
        ]
    }

    fn shapes(&self) -> Vec<usize> {
        self.parameters().iter().map(|p| p.len()).collect()
    }

    pub fn zero_gradients(&self) -> Gradients {
        Gradients::zeros_like(&self.shapes())
    }

    pub fn forward(&self, tokens: &[usize]) -> EncoderTrace {
        let tokens: Vec<usize> = tokens.iter().map(|&t| if t < self.vocab.len() { t } else { 0 }).collect();
        let pooled = mean_pool(&self.token_embeddings, self.width, &tokens);
        let pre_hidden = affine(&self.hidden_w, &self.hidden_b, &pooled);
        let hidden: Vec<f64> = pre_hidden.iter().map(|&v| v.max(0.0)).collect();
        let output = affine(&self.output_w, &self.output_b, &hidden);
        EncoderTrace {
            pooled,
            pre_hidden,
            hidden,
            output,
        }
    }

    /// Accumulates parameter gradients given `d loss / d output`.
    pub fn backward(&self, tokens: &[usize], trace: &EncoderTrace, d_output: &[f64], grads: &mut Gradients) {
        let tokens: Vec<usize> = tokens.iter().map(|&t| if t < self.vocab.len() { t } else { 0 }).collect();
        let [g_emb, g_hw, g_hb, g_ow, g_ob] = grads.0.as_mut_slice() else {
            unreachable!("encoder has five parameter tensors")
        };
        let d_hidden = affine_backward(&self.output_w, &trace.hidden, d_output, g_ow, g_ob);
        let d_pre: Vec<f64> = d_hidden
            .iter()
            .zip(&trace.pre_hidden)
            .map(|(&g, &p)| if p > 0.0 { g } else { 0.0 })
            .collect();
        let d_pooled = affine_backward(&self.hidden_w, &trace.pooled, &d_pre, g_hw, g_hb);
        pool_backward(&tokens, self.width, &d_pooled, g_emb);
    }

    pub fn encode_tokens(&self, tokens: &[usize]) -> ComplexVector {
        ComplexVector::from_halves(&self.forward(tokens).output)
    }

    pub fn encode_question(&self, text: &str) -> ComplexVector {
        self.encode_tokens(&self.vocab.encode(text))
    }
}

/// Three-way softmax classifier over mean-pooled token embeddings.
#[derive(Clone, Debug, PartialEq)]
pub struct HopClassifier {
    vocab: TokenVocabulary,
    width: usize,
    token_embeddings: Vec<f32>,
    weights: Vec<f32>,
    bias: Vec<f32>,
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

/// Index of the largest probability, preferring the lower index on ties.
fn argmax(probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HopPrediction {
    pub hops: u8,
    pub probabilities: [f64; NUM_HOP_CLASSES],
}

impl HopClassifier {
    pub fn new<R: Rng>(vocab: TokenVocabulary, width: usize, rng: &mut R) -> Self {
        let v = vocab.len();
        Self {
            token_embeddings: uniform(rng, v * width, 0.1),
            weights: xavier(rng, NUM_HOP_CLASSES, width),
            bias: vec![0.0; NUM_HOP_CLASSES],
            vocab,
            width,
        }
    }

    pub fn zeros(vocab: TokenVocabulary, width: usize) -> Self {
        let v = vocab.len();
        Self {
            token_embeddings: vec![0.0; v * width],
            weights: vec![0.0; NUM_HOP_CLASSES * width],
            bias: vec![0.0; NUM_HOP_CLASSES],
            vocab,
            width,
        }
    }

    pub fn vocab(&self) -> &TokenVocabulary {
        &self.vocab
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn parameters(&self) -> [&[f32]; 3] {
        [&self.token_embeddings, &self.weights, &self.bias]
    }

    pub fn parameters_mut(&mut self) -> [&mut [f32]; 3] {
        [&mut self.token_embeddings, &mut self.weights, &mut self.bias]
    }

    fn clamp(&self, tokens: &[usize]) -> Vec<usize> {
        tokens.iter().map(|&t| if t < self.vocab.len() { t } else { 0 }).collect()
    }

    pub fn probabilities(&self, tokens: &[usize]) -> [f64; NUM_HOP_CLASSES] {
        let pooled = mean_pool(&self.token_embeddings, self.width, &self.clamp(tokens));
        let p = softmax(&affine(&self.weights, &self.bias, &pooled));
        [p[0], p[1], p[2]]
    }

    pub fn classify_tokens(&self, tokens: &[usize]) -> HopPrediction {
        let probabilities = self.probabilities(tokens);
        HopPrediction {
            hops: argmax(&probabilities) as u8 + 1,
            probabilities,
        }
    }

    pub fn classify_hops(&self, text: &str) -> HopPrediction {
        self.classify_tokens(&self.vocab.encode(text))
    }

    /// Mean cross-entropy over `(tokens, hops)` pairs and its gradient.
    pub fn loss_and_gradient(&self, batch: &[(Vec<usize>, u8)]) -> (f64, Gradients) {
        let mut grads = Gradients::zeros_like(&[
            self.token_embeddings.len(),
            self.weights.len(),
            self.bias.len(),
        ]);
        if batch.is_empty() {
            return (0.0, grads);
        }
        let n = batch.len() as f64;
        let mut loss = 0.0;
        for (tokens, hops) in batch {
            let tokens = self.clamp(tokens);
            let label = (*hops as usize).saturating_sub(1).min(NUM_HOP_CLASSES - 1);
            let pooled = mean_pool(&self.token_embeddings, self.width, &tokens);
            let probs = softmax(&affine(&self.weights, &self.bias, &pooled));
            loss -= probs[label].max(1e-300).ln();
            let d_logits: Vec<f64> = probs
                .iter()
                .enumerate()
                .map(|(c, &p)| (p - if c == label { 1.0 } else { 0.0 }) / n)
                .collect();
            let [g_emb, g_w, g_b] = grads.0.as_mut_slice() else {
                unreachable!()
            };
            let d_pooled = affine_backward(&self.weights, &pooled, &d_logits, g_w, g_b);
            pool_backward(&tokens, self.width, &d_pooled, g_emb);
        }
        (loss / n, grads)
    }

    pub fn accuracy(&self, data: &[(Vec<usize>, u8)]) -> f64 {
        if data.is_empty() {
            return 0.0;
        }
        let correct = data
            .iter()
            .filter(|(t, h)| self.classify_tokens(t).hops == *h)
            .count();
        correct as f64 / data.len() as f64
    }
}

/// Adam with decoupled weight decay over a list of dense `f32` tensors.
pub struct AdamW {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
    step: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new(shapes: &[usize], lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            step: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn step(&mut self, params: &mut [&mut [f32]], grads: &Gradients) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step);
        let bc2 = 1.0 - self.beta2.powi(self.step);
        for (i, p) in params.iter_mut().enumerate() {
            let (m, v, g) = (&mut self.m[i], &mut self.v[i], &grads.0[i]);
            for j in 0..p.len() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                let update = (m[j] / bc1) / ((v[j] / bc2).sqrt() + self.eps);
                let w = p[j] as f64;
                p[j] = (w - self.lr * (update + self.weight_decay * w)) as f32;
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub width: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub patience: usize,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            width: 128,
            epochs: 30,
            batch_size: 32,
            learning_rate: 5e-3,
            weight_decay: 1e-4,
            patience: 5,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierEpoch {
    pub epoch: usize,
    pub loss: f64,
    pub train_accuracy: f64,
    pub valid_accuracy: Option<f64>,
}

/// Trains a hop classifier; keeps the snapshot with the best validation
/// accuracy (training accuracy when `valid` is empty).
pub fn train_classifier(
    vocab: TokenVocabulary,
    train: &[(Vec<usize>, u8)],
    valid: &[(Vec<usize>, u8)],
    config: &ClassifierConfig,
) -> Result<(HopClassifier, Vec<ClassifierEpoch>)> {
    if config.width == 0 || config.epochs == 0 || config.batch_size == 0 || config.patience == 0 {
        return Err(QuestionError::Config("counts must be at least 1".into()));
    }
    for (_, h) in train.iter().chain(valid) {
        if !(1..=3).contains(h) {
            return Err(QuestionError::BadLabel(*h));
        }
    }
    for class in 1..=3u8 {
        if !train.iter().any(|(_, h)| *h == class) {
            return Err(QuestionError::MissingClass(class));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut clf = HopClassifier::new(vocab, config.width, &mut rng);
    let shapes: Vec<usize> = clf.parameters().iter().map(|p| p.len()).collect();
    let mut opt = AdamW::new(&shapes, config.learning_rate, config.weight_decay);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::new();
    let mut best: Option<(f64, HopClassifier)> = None;
    let mut stagnant = 0;
    let mut batch = Vec::with_capacity(config.batch_size);

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(config.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| train[i].clone()));
            let (loss, grads) = clf.loss_and_gradient(&batch);
            opt.step(&mut clf.parameters_mut(), &grads);
            total += loss;
            batches += 1;
        }
        let train_accuracy = clf.accuracy(train);
        let valid_accuracy = (!valid.is_empty()).then(|| clf.accuracy(valid));
        history.push(ClassifierEpoch {
            epoch,
            loss: total / batches as f64,
            train_accuracy,
            valid_accuracy,
        });
        let score = valid_accuracy.unwrap_or(train_accuracy);
        if best.as_ref().map_or(true, |(b, _)| score > *b) {
            best = Some((score, clf.clone()));
            stagnant = 0;
        } else {
            stagnant += 1;
            if stagnant >= config.patience {
                break;
            }
        }
    }
    Ok((best.map(|(_, c)| c).unwrap_or(clf), history))
}

pub const ENCODER_MAGIC: &[u8; 4] = b"QEN1";
pub const CLASSIFIER_MAGIC: &[u8; 4] = b"QCL1";

pub fn encode_encoder(enc: &QuestionEncoder) -> Vec<u8> {
    let mut e = Encoder::new(ENCODER_MAGIC);
    e.u8(enc.hops);
    e.u32(enc.dim as u32);
    e.u32(enc.width as u32);
    e.u64(enc.vocab.len() as u64);
    e.u64(enc.vocab.hash());
    e.u64(enc.entity_hash);
    for p in enc.parameters() {
        e.f32s(p);
    }
    e.strings(enc.vocab.iter());
    e.into_bytes()
}

fn read_vocab(d: &mut Decoder<'_>, rows: u64, hash: u64) -> std::result::Result<TokenVocabulary, CheckpointError> {
    let vocab = TokenVocabulary::from_tokens(d.strings()?)?;
    if vocab.len() as u64 != rows {
        return Err(CheckpointError::Corrupt(format!(
            "vocabulary has {} tokens, header says {rows}",
            vocab.len()
        )));
    }
    if vocab.hash() != hash {
        return Err(CheckpointError::Corrupt("token vocabulary hash mismatch".into()));
    }
    Ok(vocab)
}

pub fn decode_encoder(bytes: &[u8]) -> Result<QuestionEncoder> {
    let mut d = Decoder::new(bytes, ENCODER_MAGIC)?;
    let hops = d.u8()?;
    let dim = d.u32()? as u64;
    let width = d.u32()? as u64;
    let rows = d.u64()?;
    let vocab_hash = d.u64()?;
    let entity_hash = d.u64()?;
    let token_embeddings = d.f32s(rows, width)?;
    let hidden_w = d.f32s(width, width)?;
    let hidden_b = d.f32s(1, width)?;
    let output_w = d.f32s(dim.saturating_mul(2), width)?;
    let output_b = d.f32s(dim.saturating_mul(2), 1)?;
    let vocab = read_vocab(&mut d, rows, vocab_hash)?;
    d.finish()?;
    Ok(QuestionEncoder {
        vocab,
        width: width as usize,
        dim: dim as usize,
        hops,
        entity_hash,
        token_embeddings,
        hidden_w,
        hidden_b,
        output_w,
        output_b,
    })
}

pub fn save_encoder(enc: &QuestionEncoder, path: &Path) -> Result<()> {
    container::write_file(&encode_encoder(enc), path)?;
    Ok(())
}

/// Loads an encoder and checks it against the entity vocabulary hash of the graph in use.
pub fn load_encoder(path: &Path, entity_hash: u64) -> Result<QuestionEncoder> {
    let enc = decode_encoder(&container::read_file(path)?)?;
    container::check_hash("entity vocabulary", entity_hash, enc.entity_hash)?;
    Ok(enc)
}

pub fn encode_classifier(clf: &HopClassifier) -> Vec<u8> {
    let mut e = Encoder::new(CLASSIFIER_MAGIC);
    e.u32(clf.width as u32);
    e.u64(clf.vocab.len() as u64);
    e.u64(clf.vocab.hash());
    for p in clf.parameters() {
        e.f32s(p);
    }
    e.strings(clf.vocab.iter());
    e.into_bytes()
}

pub fn decode_classifier(bytes: &[u8]) -> Result<HopClassifier> {
    let mut d = Decoder::new(bytes, CLASSIFIER_MAGIC)?;
    let width = d.u32()? as u64;
    let rows = d.u64()?;
    let vocab_hash = d.u64()?;
    let token_embeddings = d.f32s(rows, width)?;
    let weights = d.f32s(NUM_HOP_CLASSES as u64, width)?;
    let bias = d.f32s(NUM_HOP_CLASSES as u64, 1)?;
    let vocab = read_vocab(&mut d, rows, vocab_hash)?;
    d.finish()?;
    Ok(HopClassifier {
        vocab,
        width: width as usize,
        token_embeddings,
        weights,
        bias,
    })
}

pub fn save_classifier(clf: &HopClassifier, path: &Path) -> Result<()> {
    container::write_file(&encode_classifier(clf), path)?;
    Ok(())
}

pub fn load_classifier(path: &Path) -> Result<HopClassifier> {
    decode_classifier(&container::read_file(path)?)
}
