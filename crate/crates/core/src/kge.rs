//! ComplEx knowledge graph embeddings.
//!
//! Every entity and relation is a vector in `C^d`, stored as separate real
//! and imaginary `f32` tables. A triple scores
//! `Re(<e_h, e_r, conj(e_t)>)`; arithmetic is carried out in `f64`.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::container::{self, CheckpointError, Decoder, Encoder};
use crate::eval;
use crate::kg::{KnowledgeGraph, Triple};

#[derive(Debug, Error)]
pub enum KgeError {
    #[error("{kind} index {index} out of range (size {size})")]
    Index {
        kind: &'static str,
        index: usize,
        size: usize,
    },
    #[error("no negative found for {triple:?} after {retries} attempts")]
    ExhaustedNegatives { triple: Triple, retries: usize },
    #[error("training diverged at epoch {epoch}: non-finite loss")]
    Divergence { epoch: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("dimension mismatch: expected {expected}, got {found}")]
    Dimension { expected: usize, found: usize },
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

pub type Result<T, E = KgeError> = std::result::Result<T, E>;

/// A complex vector with separate real and imaginary parts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexVector {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl ComplexVector {
    pub fn zeros(dim: usize) -> Self {
        Self {
            re: vec![0.0; dim],
            im: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.re.len()
    }

    /// Splits a `2d` vector into its first (real) and second (imaginary) halves.
    pub fn from_halves(v: &[f64]) -> Self {
        let d = v.len() / 2;
        Self {
            re: v[..d].to_vec(),
            im: v[d..2 * d].to_vec(),
        }
    }
}

/// Which embedding table a parameter lives in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Table {
    Entity,
    Relation,
}

/// Complex embedding tables for entities and relations.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexModel {
    dim: usize,
    num_entities: usize,
    num_relations: usize,
    entity_re: Vec<f32>,
    entity_im: Vec<f32>,
    relation_re: Vec<f32>,
    relation_im: Vec<f32>,
}

impl ComplexModel {
    pub fn zeros(num_entities: usize, num_relations: usize, dim: usize) -> Self {
        Self {
            dim,
            num_entities,
            num_relations,
            entity_re: vec![0.0; num_entities * dim],
            entity_im: vec![0.0; num_entities * dim],
            relation_re: vec![0.0; num_relations * dim],
            relation_im: vec![0.0; num_relations * dim],
        }
    }

    /// Uniform initialization in `[-0.5/sqrt(d), 0.5/sqrt(d)]`.
    pub fn random<R: Rng>(num_entities: usize, num_relations: usize, dim: usize, rng: &mut R) -> Self {
        let mut model = Self::zeros(num_entities, num_relations, dim);
        let bound = 0.5 / (dim as f32).sqrt();
        for table in [
            &mut model.entity_re,
            &mut model.entity_im,
            &mut model.relation_re,
            &mut model.relation_im,
        ] {
            for v in table.iter_mut() {
                *v = rng.gen_range(-bound..=bound);
            }
        }
        model
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_entities(&self) -> usize {
        self.num_entities
    }

    pub fn num_relations(&self) -> usize {
        self.num_relations
    }

    fn check(&self, table: Table, index: usize) -> Result<()> {
        let (kind, size) = match table {
            Table::Entity => ("entity", self.num_entities),
            Table::Relation => ("relation", self.num_relations),
        };
        if index >= size {
            return Err(KgeError::Index { kind, index, size });
        }
        Ok(())
    }

    fn tables(&self, table: Table) -> (&[f32], &[f32]) {
        match table {
            Table::Entity => (&self.entity_re, &self.entity_im),
            Table::Relation => (&self.relation_re, &self.relation_im),
        }
    }

    fn tables_mut(&mut self, table: Table) -> (&mut [f32], &mut [f32]) {
        match table {
            Table::Entity => (&mut self.entity_re, &mut self.entity_im),
            Table::Relation => (&mut self.relation_re, &mut self.relation_im),
        }
    }

    /// Real and imaginary parts of one row.
    pub fn row(&self, table: Table, index: usize) -> (&[f32], &[f32]) {
        let d = self.dim;
        let (re, im) = self.tables(table);
        (&re[index * d..(index + 1) * d], &im[index * d..(index + 1) * d])
    }

    pub fn set_row(&mut self, table: Table, index: usize, re: &[f32], im: &[f32]) {
        let d = self.dim;
        let (tre, tim) = self.tables_mut(table);
        tre[index * d..(index + 1) * d].copy_from_slice(re);
        tim[index * d..(index + 1) * d].copy_from_slice(im);
    }

    /// Parameter `col` of a row, where columns `0..d` are real parts and `d..2d` imaginary.
    pub fn param(&self, table: Table, index: usize, col: usize) -> f32 {
        let (re, im) = self.tables(table);
        if col < self.dim {
            re[index * self.dim + col]
        } else {
            im[index * self.dim + col - self.dim]
        }
    }

    pub fn set_param(&mut self, table: Table, index: usize, col: usize, value: f32) {
        let d = self.dim;
        let (re, im) = self.tables_mut(table);
        if col < d {
            re[index * d + col] = value;
        } else {
            im[index * d + col - d] = value;
        }
    }

    pub fn relation_vector(&self, relation: usize) -> Result<ComplexVector> {
        self.check(Table::Relation, relation)?;
        let (re, im) = self.row(Table::Relation, relation);
        Ok(ComplexVector {
            re: re.iter().map(|&v| v as f64).collect(),
            im: im.iter().map(|&v| v as f64).collect(),
        })
    }

    pub fn is_finite(&self) -> bool {
        [&self.entity_re, &self.entity_im, &self.relation_re, &self.relation_im]
            .iter()
            .all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// `Re(<e_h, e_r, conj(e_t)>)`.
    pub fn score_triple(&self, head: usize, relation: usize, tail: usize) -> Result<f64> {
        self.check(Table::Entity, head)?;
        self.check(Table::Relation, relation)?;
        self.check(Table::Entity, tail)?;
        Ok(self.score_unchecked(head, relation, tail))
    }

    fn score_unchecked(&self, head: usize, relation: usize, tail: usize) -> f64 {
        let (h_re, h_im) = self.row(Table::Entity, head);
        let (r_re, r_im) = self.row(Table::Relation, relation);
        let (t_re, t_im) = self.row(Table::Entity, tail);
        let mut s = 0.0f64;
        for k in 0..self.dim {
            let (hr, hi) = (h_re[k] as f64, h_im[k] as f64);
            let (rr, ri) = (r_re[k] as f64, r_im[k] as f64);
            let (tr, ti) = (t_re[k] as f64, t_im[k] as f64);
            s += hr * rr * tr + hi * rr * ti + hr * ri * ti - hi * ri * tr;
        }
        s
    }

    /// Scores `Re(<w, conj(e_a)>)` for every entity `a`, i.e. one
    /// matrix-vector product per component.
    pub(crate) fn project_entities(&self, w: &ComplexVector) -> Vec<f64> {
        let d = self.dim;
        (0..self.num_entities)
            .map(|a| {
                let re = &self.entity_re[a * d..(a + 1) * d];
                let im = &self.entity_im[a * d..(a + 1) * d];
                let mut s = 0.0f64;
                for k in 0..d {
                    s += re[k] as f64 * w.re[k] + im[k] as f64 * w.im[k];
                }
                s
            })
            .collect()
    }

    /// `sum_a g_a * e_a`, the transpose of `project_entities`.
    pub(crate) fn weighted_entity_sum(&self, g: &[f64]) -> ComplexVector {
        let d = self.dim;
        let mut out = ComplexVector::zeros(d);
        for (a, &w) in g.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let re = &self.entity_re[a * d..(a + 1) * d];
            let im = &self.entity_im[a * d..(a + 1) * d];
            for k in 0..d {
                out.re[k] += w * re[k] as f64;
                out.im[k] += w * im[k] as f64;
            }
        }
        out
    }

    /// Elementwise product `e_h * q` for a relation-slot vector `q`.
    pub(crate) fn head_times(&self, head: usize, q: &ComplexVector) -> ComplexVector {
        let (h_re, h_im) = self.row(Table::Entity, head);
        let mut w = ComplexVector::zeros(self.dim);
        for k in 0..self.dim {
            let (hr, hi) = (h_re[k] as f64, h_im[k] as f64);
            w.re[k] = hr * q.re[k] - hi * q.im[k];
            w.im[k] = hr * q.im[k] + hi * q.re[k];
        }
        w
    }

    /// Score of `(head, relation, a)` for every entity `a`.
    pub fn score_all_tails(&self, head: usize, relation: usize) -> Result<Vec<f64>> {
        self.check(Table::Entity, head)?;
        let r = self.relation_vector(relation)?;
        Ok(self.project_entities(&self.head_times(head, &r)))
    }

    /// Score of `(a, relation, tail)` for every entity `a`, via
    /// `phi(a, r, t) = phi(t, conj(r), a)`.
    pub fn score_all_heads(&self, relation: usize, tail: usize) -> Result<Vec<f64>> {
        self.check(Table::Entity, tail)?;
        let mut r = self.relation_vector(relation)?;
        for v in r.im.iter_mut() {
            *v = -*v;
        }
        Ok(self.project_entities(&self.head_times(tail, &r)))
    }

    /// Short hex digest of the parameter tables.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        for t in [&self.entity_re, &self.entity_im, &self.relation_re, &self.relation_im] {
            for v in t.iter() {
                hasher.update(v.to_le_bytes());
            }
        }
        hasher.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Gradient rows touched by a batch. Each row holds `2d` values: real parts then imaginary parts.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseGradient {
    pub entity: BTreeMap<usize, Vec<f64>>,
    pub relation: BTreeMap<usize, Vec<f64>>,
}

impl SparseGradient {
    pub fn get(&self, table: Table, index: usize) -> Option<&[f64]> {
        match table {
            Table::Entity => self.entity.get(&index),
            Table::Relation => self.relation.get(&index),
        }
        .map(Vec::as_slice)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BatchLoss {
    pub total: f64,
    pub data: f64,
    pub regularization: f64,
}

/// A labeled triple: `+1.0` for true facts, `-1.0` for corruptions.
pub type LabeledTriple = (Triple, f64);

/// Logistic loss `mean softplus(-y * phi)` plus `l2_weight` times the mean
/// squared norm of every touched row, with analytic gradients.
pub fn loss_and_gradient(
    model: &ComplexModel,
    batch: &[LabeledTriple],
    l2_weight: f64,
) -> Result<(BatchLoss, SparseGradient)> {
    if batch.is_empty() {
        return Err(KgeError::Config("empty batch".into()));
    }
    for (t, _) in batch {
        model.check(Table::Entity, t.head)?;
        model.check(Table::Relation, t.relation)?;
        model.check(Table::Entity, t.tail)?;
    }
    let d = model.dim;
    let n = batch.len() as f64;
    let mut grad = SparseGradient::default();
    let mut data = 0.0;

    for &(t, label) in batch {
        let phi = model.score_unchecked(t.head, t.relation, t.tail);
        data += softplus(-label * phi);
        // d softplus(-y phi) / d phi
        let coef = -label * sigmoid(-label * phi) / n;

        let (h_re, h_im) = model.row(Table::Entity, t.head);
        let (r_re, r_im) = model.row(Table::Relation, t.relation);
        let (t_re, t_im) = model.row(Table::Entity, t.tail);

        let gh = grad.entity.entry(t.head).or_insert_with(|| vec![0.0; 2 * d]);
        for k in 0..d {
            let (rr, ri, tr, ti) = (r_re[k] as f64, r_im[k] as f64, t_re[k] as f64, t_im[k] as f64);
            gh[k] += coef * (rr * tr + ri * ti);
            gh[d + k] += coef * (rr * ti - ri * tr);
        }
        let gt = grad.entity.entry(t.tail).or_insert_with(|| vec![0.0; 2 * d]);
        for k in 0..d {
            let (hr, hi, rr, ri) = (h_re[k] as f64, h_im[k] as f64, r_re[k] as f64, r_im[k] as f64);
            gt[k] += coef * (hr * rr - hi * ri);
            gt[d + k] += coef * (hi * rr + hr * ri);
        }
        let gr = grad.relation.entry(t.relation).or_insert_with(|| vec![0.0; 2 * d]);
        for k in 0..d {
            let (hr, hi, tr, ti) = (h_re[k] as f64, h_im[k] as f64, t_re[k] as f64, t_im[k] as f64);
            gr[k] += coef * (hr * tr + hi * ti);
            gr[d + k] += coef * (hr * ti - hi * tr);
        }
    }
    let data = data / n;

    let touched = (grad.entity.len() + grad.relation.len()) as f64;
    let mut sq_norms = 0.0;
    for (table, rows) in [(Table::Entity, &mut grad.entity), (Table::Relation, &mut grad.relation)] {
        for (&idx, g) in rows.iter_mut() {
            let (re, im) = model.row(table, idx);
            for k in 0..d {
                let (a, b) = (re[k] as f64, im[k] as f64);
                sq_norms += a * a + b * b;
                g[k] += l2_weight * 2.0 * a / touched;
                g[d + k] += l2_weight * 2.0 * b / touched;
            }
        }
    }
    let regularization = l2_weight * sq_norms / touched;
    Ok((
        BatchLoss {
            total: data + regularization,
            data,
            regularization,
        },
        grad,
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CorruptionMode {
    Head,
    Tail,
    Both,
}

/// Rejection sampler for corrupted triples. Candidates that are training
/// triples, equal to the input, or self-loops are rejected.
pub struct NegativeSampler<'a> {
    known: &'a HashSet<Triple>,
    num_entities: usize,
    max_retries: usize,
}

impl<'a> NegativeSampler<'a> {
    pub fn new(known: &'a HashSet<Triple>, num_entities: usize, max_retries: usize) -> Result<Self> {
        if num_entities < 2 {
            return Err(KgeError::Config(
                "negative sampling needs at least 2 entities".into(),
            ));
        }
        Ok(Self {
            known,
            num_entities,
            max_retries: max_retries.max(1),
        })
    }

    pub fn corrupt<R: Rng>(&self, triple: Triple, rng: &mut R) -> Result<(Triple, CorruptionMode)> {
        let mode = match rng.gen_range(0..3) {
            0 => CorruptionMode::Head,
            1 => CorruptionMode::Tail,
            _ => CorruptionMode::Both,
        };
        self.corrupt_with_mode(triple, mode, rng).map(|t| (t, mode))
    }

    pub fn corrupt_with_mode<R: Rng>(
        &self,
        triple: Triple,
        mode: CorruptionMode,
        rng: &mut R,
    ) -> Result<Triple> {
        for _ in 0..self.max_retries {
            let mut c = triple;
            if matches!(mode, CorruptionMode::Head | CorruptionMode::Both) {
                c.head = rng.gen_range(0..self.num_entities);
            }
            if matches!(mode, CorruptionMode::Tail | CorruptionMode::Both) {
                c.tail = rng.gen_range(0..self.num_entities);
            }
            if c != triple && c.head != c.tail && !self.known.contains(&c) {
                return Ok(c);
            }
        }
        Err(KgeError::ExhaustedNegatives {
            triple,
            retries: self.max_retries,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub negatives_per_positive: usize,
    pub l2_weight: f64,
    pub patience: usize,
    pub eval_every: usize,
    pub seed: u64,
    pub max_retries: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            dim: 64,
            epochs: 200,
            batch_size: 1024,
            learning_rate: 0.1,
            negatives_per_positive: 8,
            l2_weight: 1e-3,
            patience: 20,
            eval_every: 1,
            seed: 0,
            max_retries: 1000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("dim", self.dim),
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("negatives_per_positive", self.negatives_per_positive),
            ("patience", self.patience),
            ("eval_every", self.eval_every),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(KgeError::Config(format!("{name} must be at least 1")));
            }
        }
        if !(self.learning_rate > 0.0) {
            return Err(KgeError::Config("learning_rate must be positive".into()));
        }
        if !(self.l2_weight >= 0.0) {
            return Err(KgeError::Config("l2_weight must be non-negative".into()));
        }
        Ok(())
    }
}

/// Validation metric consulted for early stopping (higher is better).
pub trait Validator {
    fn score(&mut self, model: &ComplexModel) -> f64;
}

/// Filtered two-sided hits@10 over a held-out triple set.
pub struct FilteredHits<'a> {
    pub triples: &'a [Triple],
    pub known: &'a HashSet<Triple>,
    pub k: usize,
}

impl Validator for FilteredHits<'_> {
    fn score(&mut self, model: &ComplexModel) -> f64 {
        eval::filtered_hits_at(model, self.triples, self.known, self.k)
    }
}

impl<F: FnMut(&ComplexModel) -> f64> Validator for F {
    fn score(&mut self, model: &ComplexModel) -> f64 {
        self(model)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub validation: Option<f64>,
    pub best_validation: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub history: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub evaluations: usize,
    pub stagnant_evaluations: usize,
    pub stopped_early: bool,
}

/// Row-wise Adagrad: one squared-gradient accumulator per embedding row.
struct RowAdagrad {
    entity: Vec<f64>,
    relation: Vec<f64>,
    lr: f64,
}

impl RowAdagrad {
    fn new(model: &ComplexModel, lr: f64) -> Self {
        Self {
            entity: vec![0.0; model.num_entities],
            relation: vec![0.0; model.num_relations],
            lr,
        }
    }

    fn apply(&mut self, model: &mut ComplexModel, grad: &SparseGradient) {
        let d = model.dim;
        for (table, rows) in [(Table::Entity, &grad.entity), (Table::Relation, &grad.relation)] {
            for (&idx, g) in rows {
                let acc = match table {
                    Table::Entity => &mut self.entity[idx],
                    Table::Relation => &mut self.relation[idx],
                };
                *acc += g.iter().map(|v| v * v).sum::<f64>() / (2 * d) as f64;
                let step = self.lr / (acc.sqrt() + 1e-10);
                let (re, im) = model.tables_mut(table);
                for k in 0..d {
                    re[idx * d + k] = (re[idx * d + k] as f64 - step * g[k]) as f32;
                    im[idx * d + k] = (im[idx * d + k] as f64 - step * g[d + k]) as f32;
                }
            }
        }
    }
}

/// Trains with filtered hits@10 on `valid` for early stopping. With an
/// empty `valid` set every epoch runs.
pub fn train_kge(
    train: &[Triple],
    valid: &[Triple],
    kg: &KnowledgeGraph,
    config: &TrainConfig,
) -> Result<(ComplexModel, TrainReport)> {
    if valid.is_empty() {
        return train_kge_with_validator(
            train,
            kg.num_entities(),
            kg.num_relations(),
            config,
            None::<&mut FilteredHits>,
        );
    }
    let mut validator = FilteredHits {
        triples: valid,
        known: kg.triple_set(),
        k: 10,
    };
    train_kge_with_validator(
        train,
        kg.num_entities(),
        kg.num_relations(),
        config,
        Some(&mut validator),
    )
}

/// Training loop with a caller-supplied validation metric. Returns the
/// snapshot with the best validation score (or the final model when no
/// validator is given).
pub fn train_kge_with_validator<V: Validator + ?Sized>(
    train: &[Triple],
    num_entities: usize,
    num_relations: usize,
    config: &TrainConfig,
    mut validator: Option<&mut V>,
) -> Result<(ComplexModel, TrainReport)> {
    config.validate()?;
    if train.is_empty() {
        return Err(KgeError::Config("training set is empty".into()));
    }
    let known: HashSet<Triple> = train.iter().copied().collect();
    let sampler = NegativeSampler::new(&known, num_entities, config.max_retries)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = ComplexModel::random(num_entities, num_relations, config.dim, &mut rng);
    for t in train {
        model.check(Table::Entity, t.head)?;
        model.check(Table::Relation, t.relation)?;
        model.check(Table::Entity, t.tail)?;
    }
    let mut optimizer = RowAdagrad::new(&model, config.learning_rate);
    let mut order: Vec<Triple> = train.to_vec();
    let mut report = TrainReport::default();
    let mut best: Option<(f64, ComplexModel)> = None;
    let mut batch: Vec<LabeledTriple> =
        Vec::with_capacity(config.batch_size * (1 + config.negatives_per_positive));

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            batch.clear();
            for &pos in chunk {
                batch.push((pos, 1.0));
                for _ in 0..config.negatives_per_positive {
                    let (neg, _) = sampler.corrupt(pos, &mut rng)?;
                    batch.push((neg, -1.0));
                }
            }
            let (loss, grad) = loss_and_gradient(&model, &batch, config.l2_weight)?;
            if !loss.total.is_finite() {
                return Err(KgeError::Divergence { epoch });
            }
            optimizer.apply(&mut model, &grad);
            epoch_loss += loss.total;
            batches += 1;
        }
        if !model.is_finite() {
            return Err(KgeError::Divergence { epoch });
        }
        let mut record = EpochRecord {
            epoch,
            loss: epoch_loss / batches as f64,
            validation: None,
            best_validation: best.as_ref().map(|b| b.0),
        };
        if let Some(v) = validator.as_deref_mut() {
            if epoch % config.eval_every == 0 {
                let score = v.score(&model);
                report.evaluations += 1;
                record.validation = Some(score);
                let improved = best.as_ref().map_or(true, |(b, _)| score > *b);
                if improved {
                    best = Some((score, model.clone()));
                    report.best_epoch = Some(epoch);
                    report.stagnant_evaluations = 0;
                } else {
                    report.stagnant_evaluations += 1;
                }
                record.best_validation = best.as_ref().map(|b| b.0);
                report.history.push(record);
                if report.stagnant_evaluations >= config.patience {
                    report.stopped_early = true;
                    break;
                }
                continue;
            }
        }
        report.history.push(record);
    }
    let model = match best {
        Some((_, m)) => m,
        None => model,
    };
    Ok((model, report))
}

pub const KGE_MAGIC: &[u8; 4] = b"KGE1";
/// Bytes before the first matrix.
pub const KGE_HEADER_LEN: usize = 4 + 2 + 4 + 8 + 8 + 8 + 8;

/// Content hashes of the vocabularies a model was trained against.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabHashes {
    pub entities: u64,
    pub relations: u64,
}

impl VocabHashes {
    pub fn of(kg: &KnowledgeGraph) -> Self {
        Self {
            entities: kg.entity_hash(),
            relations: kg.relation_hash(),
        }
    }
}

pub fn encode_checkpoint(model: &ComplexModel, hashes: VocabHashes) -> Vec<u8> {
    let mut e = Encoder::new(KGE_MAGIC);
    e.u32(model.dim as u32);
    e.u64(model.num_entities as u64);
    e.u64(model.num_relations as u64);
    e.u64(hashes.entities);
    e.u64(hashes.relations);
    e.f32s(&model.entity_re);
    e.f32s(&model.entity_im);
    e.f32s(&model.relation_re);
    e.f32s(&model.relation_im);
    e.into_bytes()
}

/// Decodes a checkpoint without checking it against a graph.
pub fn decode_checkpoint(bytes: &[u8]) -> Result<(ComplexModel, VocabHashes)> {
    let mut d = Decoder::new(bytes, KGE_MAGIC)?;
    let dim = d.u32()? as u64;
    let ne = d.u64()?;
    let nr = d.u64()?;
    let hashes = VocabHashes {
        entities: d.u64()?,
        relations: d.u64()?,
    };
    let entity_re = d.f32s(ne, dim)?;
    let entity_im = d.f32s(ne, dim)?;
    let relation_re = d.f32s(nr, dim)?;
    let relation_im = d.f32s(nr, dim)?;
    d.finish()?;
    Ok((
        ComplexModel {
            dim: dim as usize,
            num_entities: ne as usize,
            num_relations: nr as usize,
            entity_re,
            entity_im,
            relation_re,
            relation_im,
        },
        hashes,
    ))
}

pub fn save_checkpoint(model: &ComplexModel, hashes: VocabHashes, path: &Path) -> Result<()> {
    container::write_file(&encode_checkpoint(model, hashes), path)?;
    Ok(())
}

/// Loads a checkpoint and verifies it was trained against `kg`.
pub fn load_checkpoint(path: &Path, kg: &KnowledgeGraph) -> Result<ComplexModel> {
    let bytes = container::read_file(path)?;
    let (model, hashes) = decode_checkpoint(&bytes)?;
    let expected = VocabHashes::of(kg);
    container::check_hash("entity vocabulary", expected.entities, hashes.entities)?;
    container::check_hash("relation vocabulary", expected.relations, hashes.relations)?;
    Ok(model)
}
