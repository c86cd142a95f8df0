//! Rank-based link prediction metrics: arithmetic mean rank, its adjusted
//! variants and hits@k.
//!
//! Ties are resolved with the realistic rank, the mean of the optimistic and
//! pessimistic ranks. The adjusted metrics compare the mean rank against the
//! expected rank of a uniformly random scorer, `(num_candidates + 1) / 2`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::Triple;
use crate::kge::{ComplexModel, KgeError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("true index {0} is masked by the filter")]
    TrueMasked(usize),
    #[error("true index {index} out of range for {len} scores")]
    OutOfRange { index: usize, len: usize },
    #[error("filter mask has length {mask}, scores have length {scores}")]
    LengthMismatch { scores: usize, mask: usize },
    #[error("nothing to evaluate")]
    Empty,
    #[error(transparent)]
    Model(#[from] KgeError),
}

pub type Result<T, E = EvalError> = std::result::Result<T, E>;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankRecord {
    pub optimistic: usize,
    pub pessimistic: usize,
    pub realistic: f64,
    pub num_candidates: usize,
}

/// Rank of `scores[true_idx]` among unmasked entries.
pub fn compute_rank(scores: &[f64], true_idx: usize, filter_mask: Option<&[bool]>) -> Result<RankRecord> {
    if true_idx >= scores.len() {
        return Err(EvalError::OutOfRange {
            index: true_idx,
            len: scores.len(),
        });
    }
    if let Some(mask) = filter_mask {
        if mask.len() != scores.len() {
            return Err(EvalError::LengthMismatch {
                scores: scores.len(),
                mask: mask.len(),
            });
        }
        if mask[true_idx] {
            return Err(EvalError::TrueMasked(true_idx));
        }
    }
    let target = scores[true_idx];
    let mut greater = 0usize;
    let mut greater_equal = 0usize;
    let mut candidates = 0usize;
    for (i, &s) in scores.iter().enumerate() {
        if filter_mask.is_some_and(|m| m[i]) {
            continue;
        }
        candidates += 1;
        if s > target {
            greater += 1;
        }
        if s >= target {
            greater_equal += 1;
        }
    }
    // a NaN target compares false against everything
    let pessimistic = greater_equal.max(greater + 1);
    Ok(RankRecord {
        optimistic: greater + 1,
        pessimistic,
        realistic: (greater + 1 + pessimistic) as f64 / 2.0,
        num_candidates: candidates,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub num_queries: usize,
    pub amr: f64,
    pub aamr: f64,
    pub aamri: f64,
    pub hits_at: BTreeMap<usize, f64>,
}

impl MetricsReport {
    pub fn from_ranks(ranks: &[RankRecord], ks: &[usize]) -> Result<Self> {
        if ranks.is_empty() {
            return Err(EvalError::Empty);
        }
        let n = ranks.len() as f64;
        let amr = ranks.iter().map(|r| r.realistic).sum::<f64>() / n;
        let expected = ranks
            .iter()
            .map(|r| (r.num_candidates as f64 + 1.0) / 2.0)
            .sum::<f64>()
            / n;
        let aamr = amr / expected;
        // a single candidate per query leaves nothing to rank
        let aamri = if expected > 1.0 {
            1.0 - (amr - 1.0) / (expected - 1.0)
        } else {
            1.0
        };
        let hits_at = ks
            .iter()
            .map(|&k| {
                let hits = ranks.iter().filter(|r| r.realistic <= k as f64).count();
                (k, hits as f64 / n)
            })
            .collect();
        Ok(Self {
            num_queries: ranks.len(),
            amr,
            aamr,
            aamri,
            hits_at,
        })
    }

    pub fn hits(&self, k: usize) -> Option<f64> {
        self.hits_at.get(&k).copied()
    }

    /// One `key=value` pair per line.
    pub fn to_kv_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "queries={}", self.num_queries);
        let _ = writeln!(out, "amr={:.6}", self.amr);
        let _ = writeln!(out, "aamr={:.6}", self.aamr);
        let _ = writeln!(out, "aamri={:.6}", self.aamri);
        for (k, v) in &self.hits_at {
            let _ = writeln!(out, "hits@{k}={v:.6}");
        }
        out
    }
}

/// Known triples indexed by `(head, relation)` and `(relation, tail)`.
pub struct KnownIndex {
    tails: HashMap<(usize, usize), Vec<usize>>,
    heads: HashMap<(usize, usize), Vec<usize>>,
}

impl KnownIndex {
    pub fn new<'a>(triples: impl IntoIterator<Item = &'a Triple>) -> Self {
        let mut tails: HashMap<_, Vec<usize>> = HashMap::new();
        let mut heads: HashMap<_, Vec<usize>> = HashMap::new();
        for t in triples {
            tails.entry((t.head, t.relation)).or_default().push(t.tail);
            heads.entry((t.relation, t.tail)).or_default().push(t.head);
        }
        Self { tails, heads }
    }

    pub fn tails(&self, head: usize, relation: usize) -> &[usize] {
        self.tails.get(&(head, relation)).map_or(&[], Vec::as_slice)
    }

    pub fn heads(&self, relation: usize, tail: usize) -> &[usize] {
        self.heads.get(&(relation, tail)).map_or(&[], Vec::as_slice)
    }
}

fn mask_for(len: usize, known: &[usize], keep: usize) -> Vec<bool> {
    let mut mask = vec![false; len];
    for &e in known {
        if e != keep {
            mask[e] = true;
        }
    }
    mask
}

/// Tail and head query ranks for every evaluation triple, in input order
/// (tail query first). With `known = None` ranking is unfiltered.
pub fn link_prediction_ranks(
    model: &ComplexModel,
    eval_triples: &[Triple],
    known: Option<&KnownIndex>,
) -> Result<Vec<RankRecord>> {
    let per_triple: Vec<Result<[RankRecord; 2]>> = eval_triples
        .par_iter()
        .map(|t| {
            let n = model.num_entities();
            let tail_scores = model.score_all_tails(t.head, t.relation)?;
            let tail_mask = known.map(|k| mask_for(n, k.tails(t.head, t.relation), t.tail));
            let tail = compute_rank(&tail_scores, t.tail, tail_mask.as_deref())?;
            let head_scores = model.score_all_heads(t.relation, t.tail)?;
            let head_mask = known.map(|k| mask_for(n, k.heads(t.relation, t.tail), t.head));
            let head = compute_rank(&head_scores, t.head, head_mask.as_deref())?;
            Ok([tail, head])
        })
        .collect();
    let mut out = Vec::with_capacity(eval_triples.len() * 2);
    for r in per_triple {
        out.extend(r?);
    }
    Ok(out)
}

/// Two-sided link prediction metrics. `known` holds every true triple used for
/// filtering; pass `None` for the unfiltered setting.
pub fn evaluate_link_prediction(
    model: &ComplexModel,
    eval_triples: &[Triple],
    known: Option<&HashSet<Triple>>,
    ks: &[usize],
) -> Result<MetricsReport> {
    if eval_triples.is_empty() {
        return Err(EvalError::Empty);
    }
    let index = known.map(|k| KnownIndex::new(k.iter()));
    let ranks = link_prediction_ranks(model, eval_triples, index.as_ref())?;
    MetricsReport::from_ranks(&ranks, ks)
}

/// Filtered two-sided hits@k; 0 for an empty evaluation set.
pub fn filtered_hits_at(
    model: &ComplexModel,
    eval_triples: &[Triple],
    known: &HashSet<Triple>,
    k: usize,
) -> f64 {
    evaluate_link_prediction(model, eval_triples, Some(known), &[k])
        .ok()
        .and_then(|r| r.hits(k))
        .unwrap_or(0.0)
}
