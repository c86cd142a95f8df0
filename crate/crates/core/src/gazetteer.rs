//! Rule-based head entity extraction.
//!
//! Every node name and synonym is normalized into a token sequence and
//! inserted into a token trie. A question is scanned from every token
//! position and the longest match wins, ties going to the leftmost start.
//! Matches always cover whole tokens, so "generate" never matches "gene".

use std::collections::{BTreeSet, HashMap};
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::KnowledgeGraph;

#[derive(Debug, Error)]
pub enum MatchError {
    #[error("no known entity found in question {question:?}")]
    NoEntityFound { question: String, normalized: String },
    #[error("synonym file line {line}: {message}")]
    Synonyms { line: usize, message: String },
}

pub type Result<T, E = MatchError> = std::result::Result<T, E>;

/// Character offsets `[start, end)` into the original text.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

/// A normalized token with its character span in the source text.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NormToken {
    pub text: String,
    pub span: Span,
}

/// Lowercases, splits on whitespace and strips non-alphanumeric characters
/// from both ends of every token. Interior punctuation is kept.
pub fn normalize_tokens(text: &str) -> Vec<NormToken> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if chars[i].is_whitespace() {
            i += 1;
            continue;
        }
        let mut end = i;
        while end < chars.len() && !chars[end].is_whitespace() {
            end += 1;
        }
        let (mut s, mut e) = (i, end);
        while s < e && !chars[s].is_alphanumeric() {
            s += 1;
        }
        while e > s && !chars[e - 1].is_alphanumeric() {
            e -= 1;
        }
        if s < e {
            let word: String = chars[s..e].iter().collect();
            out.push(NormToken {
                text: word.to_lowercase(),
                span: Span { start: s, end: e },
            });
        }
        i = end;
    }
    out
}

/// Normalized form as a single space-joined string.
pub fn normalize(text: &str) -> String {
    normalize_tokens(text)
        .into_iter()
        .map(|t| t.text)
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Default, Clone)]
struct TrieNode {
    children: HashMap<String, usize>,
    form: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SurfaceForm {
    pub text: String,
    pub entities: Vec<usize>,
}

/// Result of head extraction. More than one candidate means the matched
/// surface form is shared by several entities.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadMatch {
    pub candidates: Vec<usize>,
    pub span: Span,
    pub surface: String,
}

impl HeadMatch {
    pub fn entity(&self) -> Option<usize> {
        match self.candidates.as_slice() {
            [e] => Some(*e),
            _ => None,
        }
    }

    pub fn is_ambiguous(&self) -> bool {
        self.candidates.len() > 1
    }
}

#[derive(Debug, Clone)]
pub struct Gazetteer {
    nodes: Vec<TrieNode>,
    forms: Vec<SurfaceForm>,
    names: Vec<String>,
    skipped: usize,
}

impl Default for Gazetteer {
    fn default() -> Self {
        Self {
            nodes: vec![TrieNode::default()],
            forms: Vec::new(),
            names: Vec::new(),
            skipped: 0,
        }
    }
}

impl Gazetteer {
    /// Entries from every node's display name and synonyms. Entities with
    /// no metadata name are skipped and counted.
    pub fn build(kg: &KnowledgeGraph) -> Self {
        let mut gz = Self {
            names: vec![String::new(); kg.num_entities()],
            ..Self::default()
        };
        for e in 0..kg.num_entities() {
            match kg.meta(e) {
                Some(meta) if !normalize(&meta.name).is_empty() => {
                    gz.names[e] = meta.name.clone();
                    gz.insert(&meta.name, e);
                    for syn in &meta.synonyms {
                        gz.insert(syn, e);
                    }
                }
                _ => gz.skipped += 1,
            }
        }
        gz
    }

    /// Adds one surface form. Returns `false` if it normalizes to nothing.
    pub fn insert(&mut self, surface: &str, entity: usize) -> bool {
        let tokens = normalize_tokens(surface);
        if tokens.is_empty() {
            return false;
        }
        if entity >= self.names.len() {
            self.names.resize(entity + 1, String::new());
        }
        if self.names[entity].is_empty() {
            self.names[entity] = surface.trim().to_owned();
        }
        let mut node = 0;
        for tok in &tokens {
            node = match self.nodes[node].children.get(&tok.text) {
                Some(&next) => next,
                None => {
                    self.nodes.push(TrieNode::default());
                    let next = self.nodes.len() - 1;
                    self.nodes[node].children.insert(tok.text.clone(), next);
                    next
                }
            };
        }
        let form = match self.nodes[node].form {
            Some(f) => f,
            None => {
                self.forms.push(SurfaceForm {
                    text: tokens.iter().map(|t| t.text.as_str()).collect::<Vec<_>>().join(" "),
                    entities: Vec::new(),
                });
                self.nodes[node].form = Some(self.forms.len() - 1);
                self.forms.len() - 1
            }
        };
        let entities = &mut self.forms[form].entities;
        if !entities.contains(&entity) {
            entities.push(entity);
            entities.sort_unstable();
        }
        true
    }

    /// Reads `entity-id <TAB> synonym` lines.
    pub fn add_synonyms<R: BufRead>(&mut self, kg: &KnowledgeGraph, reader: R) -> Result<usize> {
        let mut added = 0;
        for (lineno, line) in reader.lines().enumerate() {
            let err = |message: String| MatchError::Synonyms {
                line: lineno + 1,
                message,
            };
            let line = line.map_err(|e| err(e.to_string()))?;
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (id, synonym) = line
                .split_once('\t')
                .ok_or_else(|| err("expected entity-id <TAB> synonym".into()))?;
            let entity = kg
                .entity_index(id)
                .ok_or_else(|| err(format!("unknown entity id {id:?}")))?;
            if self.insert(synonym, entity) {
                added += 1;
            }
        }
        Ok(added)
    }

    pub fn len(&self) -> usize {
        self.forms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forms.is_empty()
    }

    pub fn skipped(&self) -> usize {
        self.skipped
    }

    pub fn forms(&self) -> &[SurfaceForm] {
        &self.forms
    }

    pub fn lookup(&self, surface: &str) -> Option<&SurfaceForm> {
        let mut node = 0;
        for tok in normalize_tokens(surface) {
            node = *self.nodes[node].children.get(&tok.text)?;
        }
        self.nodes[node].form.map(|f| &self.forms[f])
    }

    /// All whole-token matches as `(start token, end token, form)`.
    pub fn all_matches(&self, tokens: &[NormToken]) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::new();
        for start in 0..tokens.len() {
            let mut node = 0;
            for (offset, tok) in tokens[start..].iter().enumerate() {
                match self.nodes[node].children.get(&tok.text) {
                    Some(&next) => node = next,
                    None => break,
                }
                if let Some(form) = self.nodes[node].form {
                    out.push((start, start + offset + 1, form));
                }
            }
        }
        out
    }

    /// Longest gazetteer match in the question, leftmost on ties.
    pub fn extract_head(&self, question: &str) -> Result<HeadMatch> {
        let tokens = normalize_tokens(question);
        let best = self
            .all_matches(&tokens)
            .into_iter()
            .max_by(|a, b| (a.1 - a.0).cmp(&(b.1 - b.0)).then(b.0.cmp(&a.0)));
        match best {
            Some((start, end, form)) => Ok(HeadMatch {
                candidates: self.forms[form].entities.clone(),
                span: Span {
                    start: tokens[start].span.start,
                    end: tokens[end - 1].span.end,
                },
                surface: self.forms[form].text.clone(),
            }),
            None => Err(MatchError::NoEntityFound {
                question: question.to_owned(),
                normalized: tokens.into_iter().map(|t| t.text).collect::<Vec<_>>().join(" "),
            }),
        }
    }

    pub fn name(&self, entity: usize) -> Option<&str> {
        self.names.get(entity).map(String::as_str).filter(|s| !s.is_empty())
    }

    /// Entities with a name or synonym whose normalized form starts with the
    /// normalized prefix, deduplicated and sorted by display name.
    pub fn prefix_search(&self, prefix: &str, limit: usize) -> Vec<usize> {
        let prefix = normalize(prefix);
        let hits: BTreeSet<usize> = self
            .forms
            .iter()
            .filter(|f| f.text.starts_with(&prefix))
            .flat_map(|f| f.entities.iter().copied())
            .collect();
        let mut hits: Vec<usize> = hits.into_iter().collect();
        hits.sort_by(|&a, &b| {
            let (na, nb) = (self.names[a].to_lowercase(), self.names[b].to_lowercase());
            na.cmp(&nb).then(a.cmp(&b))
        });
        hits.truncate(limit);
        hits
    }
}
