//! Answer scoring, per-hop question encoder training and the end-to-end
//! question answering pipeline.
//!
//! A question embedding `e_q` takes the place of a relation embedding in
//! the ComplEx scoring function, so every entity `a` is scored as
//! `Re(<e_head, e_q, conj(e_a)>)`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::QAExample;
use crate::gazetteer::{Gazetteer, MatchError, Span};
use crate::kg::{load_kg, KgError, KnowledgeGraph};
use crate::kge::{self, sigmoid, softplus, ComplexModel, ComplexVector, KgeError, Table};
use crate::question::{
    self, AdamW, EncoderTrace, Gradients, HopClassifier, HopPrediction, QuestionEncoder,
    QuestionError, TokenVocabulary,
};

#[derive(Debug, Error)]
pub enum QaError {
    #[error("no known entity found in question {question:?}")]
    NoEntity { question: String, normalized: String },
    #[error("question {question:?} mentions {surface:?}, which names several entities")]
    AmbiguousHead {
        question: String,
        surface: String,
        span: Span,
        candidates: Vec<usize>,
    },
    #[error("question embedding has dimension {found}, model expects {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("entity index {0} out of range")]
    EntityIndex(usize),
    #[error("training examples mix hop classes ({expected} and {found})")]
    MixedHops { expected: u8, found: u8 },
    #[error("no examples")]
    Empty,
    #[error("no question encoder loaded for {0}-hop questions")]
    MissingEncoder(u8),
    #[error("incompatible pipeline components: {0}")]
    Incompatible(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("cannot open {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Graph(#[from] KgError),
    #[error(transparent)]
    Embedding(#[from] KgeError),
    #[error(transparent)]
    Question(#[from] QuestionError),
    #[error(transparent)]
    Synonyms(#[from] MatchError),
}

pub type Result<T, E = QaError> = std::result::Result<T, E>;

/// Score of every entity as the answer to `(head, e_q)`.
pub fn score_answers(model: &ComplexModel, head: usize, e_q: &ComplexVector) -> Result<Vec<f64>> {
    if e_q.re.len() != model.dim() || e_q.im.len() != model.dim() {
        return Err(QaError::Dimension {
            expected: model.dim(),
            found: e_q.re.len().max(e_q.im.len()),
        });
    }
    if head >= model.num_entities() {
        return Err(QaError::EntityIndex(head));
    }
    Ok(model.project_entities(&model.head_times(head, e_q)))
}

/// Entity indices ordered by descending score, ties by ascending index,
/// skipping `exclude`, truncated to `k`.
pub fn top_k(scores: &[f64], k: usize, exclude: Option<usize>) -> Vec<usize> {
    let cmp = |a: &usize, b: &usize| scores[*b].total_cmp(&scores[*a]).then(a.cmp(b));
    let mut idx: Vec<usize> = (0..scores.len()).filter(|&i| Some(i) != exclude).collect();
    if k < idx.len() {
        idx.select_nth_unstable_by(k, cmp);
        idx.truncate(k);
    }
    idx.sort_unstable_by(cmp);
    idx
}

/// A tokenized training example.
#[derive(Clone, Debug)]
pub struct QaItem {
    pub tokens: Vec<usize>,
    pub head: usize,
    pub answers: Vec<usize>,
}

impl QaItem {
    pub fn new(vocab: &TokenVocabulary, ex: &QAExample) -> Self {
        Self {
            tokens: vocab.encode(&ex.question),
            head: ex.head,
            answers: ex.answers.clone(),
        }
    }
}

/// Mean over the batch of the entity-averaged binary cross-entropy between
/// `sigmoid(score_answers)` and label-smoothed multi-hot targets: answers
/// share `1 - smoothing`, every other entity gets `smoothing / |E|`.
/// Only the encoder receives gradients.
pub fn qa_loss_and_gradient(
    model: &ComplexModel,
    encoder: &QuestionEncoder,
    batch: &[QaItem],
    smoothing: f64,
) -> Result<(f64, Gradients)> {
    let mut grads = encoder.zero_gradients();
    if batch.is_empty() {
        return Ok((0.0, grads));
    }
    let n_ent = model.num_entities();
    let d = model.dim();
    let scale = 1.0 / (batch.len() as f64 * n_ent as f64);
    let mut loss = 0.0;
    for item in batch {
        let trace: EncoderTrace = encoder.forward(&item.tokens);
        let q = ComplexVector::from_halves(&trace.output);
        let scores = score_answers(model, item.head, &q)?;
        let mut targets = vec![smoothing / n_ent as f64; n_ent];
        let share = (1.0 - smoothing) / item.answers.len().max(1) as f64;
        for &a in &item.answers {
            if a >= n_ent {
                return Err(QaError::EntityIndex(a));
            }
            targets[a] = share;
        }
        let mut g = vec![0.0; n_ent];
        for a in 0..n_ent {
            let s = scores[a];
            // BCE with logits: softplus(s) - t s
            loss += (softplus(s) - targets[a] * s) * scale;
            g[a] = (sigmoid(s) - targets[a]) * scale;
        }
        let sum = model.weighted_entity_sum(&g);
        let (h_re, h_im) = model.row(Table::Entity, item.head);
        let mut d_out = vec![0.0; 2 * d];
        for k in 0..d {
            let (hr, hi) = (h_re[k] as f64, h_im[k] as f64);
            d_out[k] = sum.re[k] * hr + sum.im[k] * hi;
            d_out[d + k] = sum.im[k] * hr - sum.re[k] * hi;
        }
        encoder.backward(&item.tokens, &trace, &d_out, &mut grads);
    }
    Ok((loss, grads))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QaConfig {
    pub width: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub label_smoothing: f64,
    pub patience: usize,
    pub eval_every: usize,
    pub seed: u64,
}

impl Default for QaConfig {
    fn default() -> Self {
        Self {
            width: 128,
            epochs: 100,
            batch_size: 32,
            learning_rate: 1e-3,
            weight_decay: 1e-4,
            label_smoothing: 0.1,
            patience: 20,
            eval_every: 1,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QaEpoch {
    pub epoch: usize,
    pub loss: f64,
    pub valid_hits_at_10: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct QaReport {
    pub history: Vec<QaEpoch>,
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
}

/// Trains one question encoder against a frozen embedding model.
pub fn train_qa(
    model: &ComplexModel,
    vocab: &TokenVocabulary,
    train: &[QAExample],
    valid: &[QAExample],
    config: &QaConfig,
) -> Result<(QuestionEncoder, QaReport)> {
    let hops = train.first().ok_or(QaError::Empty)?.hops;
    if let Some(ex) = train.iter().find(|e| e.hops != hops) {
        return Err(QaError::MixedHops {
            expected: hops,
            found: ex.hops,
        });
    }
    if config.width == 0
        || config.epochs == 0
        || config.batch_size == 0
        || config.patience == 0
        || config.eval_every == 0
    {
        return Err(QaError::Config("counts must be at least 1".into()));
    }
    if !(0.0..1.0).contains(&config.label_smoothing) {
        return Err(QaError::Config("label_smoothing must lie in [0, 1)".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut encoder = QuestionEncoder::new(vocab.clone(), config.width, model.dim(), &mut rng);
    encoder.set_hops(hops);
    let items: Vec<QaItem> = train.iter().map(|e| QaItem::new(vocab, e)).collect();
    let shapes: Vec<usize> = encoder.parameters().iter().map(|p| p.len()).collect();
    let mut opt = AdamW::new(&shapes, config.learning_rate, config.weight_decay);
    let mut order: Vec<usize> = (0..items.len()).collect();
    let mut report = QaReport::default();
    let mut best: Option<(f64, QuestionEncoder)> = None;
    let mut stagnant = 0;
    let mut batch = Vec::with_capacity(config.batch_size);

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(config.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| items[i].clone()));
            let (loss, grads) = qa_loss_and_gradient(model, &encoder, &batch, config.label_smoothing)?;
            if !loss.is_finite() {
                return Err(KgeError::Divergence { epoch }.into());
            }
            opt.step(&mut encoder.parameters_mut(), &grads);
            total += loss;
            batches += 1;
        }
        let mut record = QaEpoch {
            epoch,
            loss: total / batches as f64,
            valid_hits_at_10: None,
        };
        if !valid.is_empty() && epoch % config.eval_every == 0 {
            let hits = evaluate_encoder(model, &encoder, valid, 10)?;
            record.valid_hits_at_10 = Some(hits);
            report.history.push(record);
            if best.as_ref().map_or(true, |(b, _)| hits > *b) {
                best = Some((hits, encoder.clone()));
                report.best_epoch = Some(epoch);
                stagnant = 0;
            } else {
                stagnant += 1;
                if stagnant >= config.patience {
                    report.stopped_early = true;
                    break;
                }
            }
        } else {
            report.history.push(record);
        }
    }
    Ok((best.map(|(_, e)| e).unwrap_or(encoder), report))
}

/// Fraction of examples with at least one gold answer among the top `k`
/// entities of `scores(example)`, the head excluded.
pub fn evaluate_qa<F>(test: &[QAExample], k: usize, mut scores: F) -> Result<f64>
where
    F: FnMut(&QAExample) -> Result<Vec<f64>>,
{
    if test.is_empty() {
        return Err(QaError::Empty);
    }
    let mut hits = 0usize;
    for ex in test {
        let s = scores(ex)?;
        let top = top_k(&s, k, Some(ex.head));
        if top.iter().any(|a| ex.answers.binary_search(a).is_ok()) {
            hits += 1;
        }
    }
    Ok(hits as f64 / test.len() as f64)
}

/// hits@k using the gold head entity and one encoder.
pub fn evaluate_encoder(
    model: &ComplexModel,
    encoder: &QuestionEncoder,
    test: &[QAExample],
    k: usize,
) -> Result<f64> {
    evaluate_qa(test, k, |ex| {
        score_answers(model, ex.head, &encoder.encode_question(&ex.question))
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedAnswer {
    pub entity: usize,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnswerSet {
    pub head: usize,
    pub span: Span,
    pub surface: String,
    pub hops: HopPrediction,
    pub answers: Vec<RankedAnswer>,
}

/// Artifact locations for a full pipeline.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelinePaths {
    pub triples: PathBuf,
    pub nodes: Option<PathBuf>,
    pub synonyms: Option<PathBuf>,
    pub kge: PathBuf,
    pub classifier: PathBuf,
    /// Encoder checkpoint per hop class.
    pub encoders: BTreeMap<u8, PathBuf>,
}

pub const DEFAULT_TOP_K: usize = 10;

/// Graph, embeddings, gazetteer, hop classifier and one encoder per hop class.
pub struct QaPipeline {
    pub kg: KnowledgeGraph,
    pub model: ComplexModel,
    pub gazetteer: Gazetteer,
    pub classifier: HopClassifier,
    pub encoders: BTreeMap<u8, QuestionEncoder>,
    pub top_k: usize,
}

impl QaPipeline {
    /// Assembles a pipeline after checking that every component agrees on
    /// dimensions and vocabularies.
    pub fn new(
        kg: KnowledgeGraph,
        model: ComplexModel,
        gazetteer: Gazetteer,
        classifier: HopClassifier,
        encoders: BTreeMap<u8, QuestionEncoder>,
    ) -> Result<Self> {
        if model.num_entities() != kg.num_entities() || model.num_relations() != kg.num_relations() {
            return Err(QaError::Incompatible(format!(
                "embedding tables are {}x{} but the graph has {} entities and {} relations",
                model.num_entities(),
                model.num_relations(),
                kg.num_entities(),
                kg.num_relations()
            )));
        }
        let entity_hash = kg.entity_hash();
        for (hops, enc) in &encoders {
            if enc.dim() != model.dim() {
                return Err(QaError::Incompatible(format!(
                    "{hops}-hop encoder has dimension {}, embeddings have {}",
                    enc.dim(),
                    model.dim()
                )));
            }
            if enc.entity_hash() != entity_hash {
                return Err(QaError::Incompatible(format!(
                    "{hops}-hop encoder was trained against a different graph"
                )));
            }
            if enc.vocab().hash() != classifier.vocab().hash() {
                return Err(QaError::Incompatible(format!(
                    "{hops}-hop encoder and hop classifier use different token vocabularies"
                )));
            }
        }
        Ok(Self {
            kg,
            model,
            gazetteer,
            classifier,
            encoders,
            top_k: DEFAULT_TOP_K,
        })
    }

    pub fn load(paths: &PipelinePaths) -> Result<Self> {
        let kg = load_kg(&paths.triples, paths.nodes.as_deref())?;
        let model = kge::load_checkpoint(&paths.kge, &kg)?;
        let mut gazetteer = Gazetteer::build(&kg);
        if let Some(syn) = &paths.synonyms {
            gazetteer.add_synonyms(&kg, open(syn)?)?;
        }
        let classifier = question::load_classifier(&paths.classifier)?;
        let mut encoders = BTreeMap::new();
        for (&hops, path) in &paths.encoders {
            let enc = question::load_encoder(path, kg.entity_hash())?;
            encoders.insert(hops, enc);
        }
        Self::new(kg, model, gazetteer, classifier, encoders)
    }

    /// Extracts the head, routes by predicted hop count and ranks every
    /// entity except the head.
    pub fn answer_question(&self, question: &str, limit: Option<usize>) -> Result<AnswerSet> {
        let head = self.gazetteer.extract_head(question).map_err(|e| match e {
            MatchError::NoEntityFound {
                question,
                normalized,
            } => QaError::NoEntity {
                question,
                normalized,
            },
            other => QaError::Synonyms(other),
        })?;
        let entity = match head.entity() {
            Some(e) => e,
            None => {
                return Err(QaError::AmbiguousHead {
                    question: question.to_owned(),
                    surface: head.surface,
                    span: head.span,
                    candidates: head.candidates,
                })
            }
        };
        let hops = self.classifier.classify_hops(question);
        let encoder = self
            .encoders
            .get(&hops.hops)
            .ok_or(QaError::MissingEncoder(hops.hops))?;
        let scores = score_answers(&self.model, entity, &encoder.encode_question(question))?;
        let answers = top_k(&scores, limit.unwrap_or(self.top_k), Some(entity))
            .into_iter()
            .map(|a| RankedAnswer {
                entity: a,
                score: scores[a],
            })
            .collect();
        Ok(AnswerSet {
            head: entity,
            span: head.span,
            surface: head.surface,
            hops,
            answers,
        })
    }

    /// hits@k through the full text pipeline. Extraction or routing failures count as misses.
    pub fn evaluate(&self, test: &[QAExample], k: usize) -> Result<f64> {
        if test.is_empty() {
            return Err(QaError::Empty);
        }
        let hits = test
            .iter()
            .filter(|ex| match self.answer_question(&ex.question, Some(k)) {
                Ok(set) => set
                    .answers
                    .iter()
                    .any(|a| ex.answers.binary_search(&a.entity).is_ok()),
                Err(_) => false,
            })
            .count();
        Ok(hits as f64 / test.len() as f64)
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|source| QaError::Io {
        path: path.display().to_string(),
        source,
    })
}
