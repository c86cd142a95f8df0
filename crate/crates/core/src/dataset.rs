//! Question-answer generation from metapath templates, the leakage-free
//! 80:10:10 split and the QA TSV format.
//!
//! Template file, one text form per line:
//!
//! ```text
//! id <TAB> rel[:fwd|:inv](,rel[:fwd|:inv])* <TAB> text form containing {head}
//! ```
//!
//! Repeated ids accumulate text forms. QA TSV:
//!
//! ```text
//! question <TAB> head-id <TAB> answer-id|answer-id|... <TAB> hops
//! ```

use std::collections::{BTreeSet, HashMap, HashSet};
use std::io::{BufRead, Write};

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::{Direction, KgError, KnowledgeGraph, Metapath, MAX_HOPS};

pub const HEAD_PLACEHOLDER: &str = "{head}";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("template {template}: {message}")]
    Generation { template: String, message: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Graph(#[from] KgError),
}

pub type Result<T, E = DatasetError> = std::result::Result<T, E>;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionTemplate {
    pub id: String,
    pub path: Vec<(String, Direction)>,
    pub text_forms: Vec<String>,
}

impl QuestionTemplate {
    pub fn hops(&self) -> usize {
        self.path.len()
    }

    /// Resolves relation names against `kg`.
    pub fn metapath(&self, kg: &KnowledgeGraph) -> Result<Metapath> {
        let steps = self
            .path
            .iter()
            .map(|(rel, dir)| {
                kg.relation_index(rel)
                    .map(|r| (r, *dir))
                    .ok_or_else(|| DatasetError::Generation {
                        template: self.id.clone(),
                        message: format!("relation {rel:?} not in graph"),
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Metapath::new(steps)?)
    }
}

fn parse_path(spec: &str, line: usize) -> Result<Vec<(String, Direction)>> {
    let err = |message: String| DatasetError::Parse { line, message };
    let mut steps = Vec::new();
    for step in spec.split(',') {
        let step = step.trim();
        let (rel, dir) = match step.rsplit_once(':') {
            Some((rel, "fwd")) => (rel, Direction::Forward),
            Some((rel, "inv")) => (rel, Direction::Inverse),
            Some((_, tag)) => return Err(err(format!("unknown direction tag {tag:?}"))),
            None => (step, Direction::Forward),
        };
        if rel.is_empty() {
            return Err(err("empty relation in path".into()));
        }
        steps.push((rel.to_owned(), dir));
    }
    if steps.len() > MAX_HOPS {
        return Err(err(format!("path has {} steps, at most {MAX_HOPS} supported", steps.len())));
    }
    Ok(steps)
}

pub fn parse_templates<R: BufRead>(reader: R) -> Result<Vec<QuestionTemplate>> {
    let mut templates: IndexMap<String, QuestionTemplate> = IndexMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let err = |message: String| DatasetError::Parse { line: lineno, message };
        let line = line.map_err(|e| err(e.to_string()))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(err(format!("expected 3 tab-separated fields, found {}", fields.len())));
        }
        let id = fields[0].trim();
        if id.is_empty() {
            return Err(err("empty template id".into()));
        }
        let path = parse_path(fields[1], lineno)?;
        let text = fields[2].trim();
        if text.matches(HEAD_PLACEHOLDER).count() != 1 {
            return Err(err(format!("text form must contain {HEAD_PLACEHOLDER} exactly once")));
        }
        match templates.get_mut(id) {
            Some(t) => {
                if t.path != path {
                    return Err(err(format!("template {id} redefined with a different path")));
                }
                t.text_forms.push(text.to_owned());
            }
            None => {
                templates.insert(
                    id.to_owned(),
                    QuestionTemplate {
                        id: id.to_owned(),
                        path,
                        text_forms: vec![text.to_owned()],
                    },
                );
            }
        }
    }
    Ok(templates.into_values().collect())
}

pub fn write_templates<W: Write>(mut w: W, templates: &[QuestionTemplate]) -> std::io::Result<()> {
    for t in templates {
        let path = t
            .path
            .iter()
            .map(|(r, d)| format!("{r}:{}", d.tag()))
            .collect::<Vec<_>>()
            .join(",");
        for form in &t.text_forms {
            writeln!(w, "{}\t{path}\t{form}", t.id)?;
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QAExample {
    pub question: String,
    pub head: usize,
    /// Sorted, non-empty.
    pub answers: Vec<usize>,
    pub hops: u8,
    /// Generating template id; empty when read back from TSV.
    #[serde(default)]
    pub template: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    pub per_template_cap: usize,
    /// Text-form variants emitted per head, assigned round-robin.
    pub forms_per_head: usize,
    pub seed: u64,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self {
            per_template_cap: 1000,
            forms_per_head: 1,
            seed: 0,
        }
    }
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c == '\t' || c == '\n' || c == '\r' { ' ' } else { c })
        .collect()
}

/// Kinds of entities that can start the first step of `path`.
fn start_kinds(kg: &KnowledgeGraph, path: &Metapath) -> HashSet<String> {
    let Some(&(rel, dir)) = path.steps().first() else {
        return HashSet::new();
    };
    kg.triples()
        .iter()
        .filter(|t| t.relation == rel)
        .map(|t| match dir {
            Direction::Forward => t.head,
            Direction::Inverse => t.tail,
        })
        .map(|e| kg.kind(e).to_owned())
        .collect()
}

/// One example per eligible head and text form. A head is eligible if its
/// kind can start the path and the path reaches some entity other than itself.
pub fn generate_qa(
    kg: &KnowledgeGraph,
    templates: &[QuestionTemplate],
    config: &GenerateConfig,
) -> Result<Vec<QAExample>> {
    if templates.is_empty() {
        return Err(DatasetError::Config("no templates".into()));
    }
    if config.per_template_cap == 0 || config.forms_per_head == 0 {
        return Err(DatasetError::Config(
            "per_template_cap and forms_per_head must be at least 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut out = Vec::new();
    for template in templates {
        let path = template.metapath(kg)?;
        if path.is_empty() {
            return Err(DatasetError::Generation {
                template: template.id.clone(),
                message: "empty path".into(),
            });
        }
        let kinds = start_kinds(kg, &path);
        let mut eligible = Vec::new();
        for head in 0..kg.num_entities() {
            if !kinds.contains(kg.kind(head)) {
                continue;
            }
            let answers = kg.traverse_metapath(head, &path)?;
            if answers.is_empty() || (answers.len() == 1 && answers.contains(&head)) {
                continue;
            }
            eligible.push((head, answers));
        }
        if eligible.len() > config.per_template_cap {
            let mut keep =
                rand::seq::index::sample(&mut rng, eligible.len(), config.per_template_cap).into_vec();
            keep.sort_unstable();
            let mut it = keep.into_iter().peekable();
            let mut idx = 0;
            eligible.retain(|_| {
                let k = it.peek() == Some(&idx);
                if k {
                    it.next();
                }
                idx += 1;
                k
            });
        }
        let forms = &template.text_forms;
        let variants = config.forms_per_head.min(forms.len());
        for (j, (head, answers)) in eligible.into_iter().enumerate() {
            let name = sanitize(kg.display_name(head));
            for v in 0..variants {
                let form = &forms[(j + v) % forms.len()];
                out.push(QAExample {
                    question: form.replacen(HEAD_PLACEHOLDER, &name, 1),
                    head,
                    answers: answers.iter().copied().collect(),
                    hops: path.len() as u8,
                    template: template.id.clone(),
                });
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct QaSplit {
    pub train: Vec<QAExample>,
    pub valid: Vec<QAExample>,
    pub test: Vec<QAExample>,
}

/// Seeded split keeping every `(head, template)` group within one partition.
pub fn split_qa(examples: &[QAExample], ratios: (f64, f64, f64), seed: u64) -> Result<QaSplit> {
    let (tr, va, te) = ratios;
    if !(tr >= 0.0 && va >= 0.0 && te >= 0.0) || ((tr + va + te) - 1.0).abs() > 1e-9 {
        return Err(DatasetError::Config(format!(
            "split ratios must be non-negative and sum to 1, got ({tr}, {va}, {te})"
        )));
    }
    let mut groups: IndexMap<(usize, &str), Vec<usize>> = IndexMap::new();
    for (i, ex) in examples.iter().enumerate() {
        groups.entry((ex.head, ex.template.as_str())).or_default().push(i);
    }
    let mut groups: Vec<Vec<usize>> = groups.into_values().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    groups.shuffle(&mut rng);

    let n = examples.len() as f64;
    let train_target = (tr * n).round() as usize;
    let valid_target = (va * n).round() as usize;
    let mut split = QaSplit::default();
    for group in groups {
        let bucket = if split.train.len() < train_target {
            &mut split.train
        } else if split.valid.len() < valid_target {
            &mut split.valid
        } else {
            &mut split.test
        };
        bucket.extend(group.into_iter().map(|i| examples[i].clone()));
    }
    Ok(split)
}

pub fn write_qa_tsv<W: Write>(mut w: W, kg: &KnowledgeGraph, examples: &[QAExample]) -> std::io::Result<()> {
    for ex in examples {
        let answers = ex
            .answers
            .iter()
            .map(|&a| kg.entity_id(a).unwrap_or(""))
            .collect::<Vec<_>>()
            .join("|");
        writeln!(
            w,
            "{}\t{}\t{answers}\t{}",
            sanitize(&ex.question),
            kg.entity_id(ex.head).unwrap_or(""),
            ex.hops
        )?;
    }
    Ok(())
}

/// A QA TSV row before entity ids are resolved.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawQaRow {
    pub line: usize,
    pub question: String,
    pub head: String,
    pub answers: Vec<String>,
    pub hops: u8,
}

pub fn parse_qa_tsv<R: BufRead>(reader: R) -> Result<Vec<RawQaRow>> {
    let mut rows = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let err = |message: String| DatasetError::Parse { line: lineno, message };
        let line = line.map_err(|e| err(e.to_string()))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(err(format!("expected 4 tab-separated fields, found {}", fields.len())));
        }
        let hops: u8 = fields[3]
            .trim()
            .parse()
            .ok()
            .filter(|h| (1..=MAX_HOPS as u8).contains(h))
            .ok_or_else(|| err(format!("hop count {:?} not in 1..=3", fields[3])))?;
        let answers: Vec<String> = fields[2]
            .split('|')
            .filter(|a| !a.is_empty())
            .map(str::to_owned)
            .collect();
        if answers.is_empty() {
            return Err(err("no answers".into()));
        }
        if fields[1].is_empty() {
            return Err(err("empty head id".into()));
        }
        rows.push(RawQaRow {
            line: lineno,
            question: fields[0].to_owned(),
            head: fields[1].to_owned(),
            answers,
            hops,
        });
    }
    Ok(rows)
}

pub fn read_qa_tsv<R: BufRead>(reader: R, kg: &KnowledgeGraph) -> Result<Vec<QAExample>> {
    parse_qa_tsv(reader)?
        .into_iter()
        .map(|row| {
            let resolve = |id: &str| {
                kg.entity_index(id).ok_or_else(|| DatasetError::Parse {
                    line: row.line,
                    message: format!("unknown entity id {id:?}"),
                })
            };
            let head = resolve(&row.head)?;
            let answers: BTreeSet<usize> = row
                .answers
                .iter()
                .map(|a| resolve(a))
                .collect::<Result<_>>()?;
            Ok(QAExample {
                question: row.question,
                head,
                answers: answers.into_iter().collect(),
                hops: row.hops,
                template: String::new(),
            })
        })
        .collect()
}

/// Examples grouped by hop count.
pub fn by_hops(examples: &[QAExample]) -> HashMap<u8, Vec<QAExample>> {
    let mut out: HashMap<u8, Vec<QAExample>> = HashMap::new();
    for ex in examples {
        out.entry(ex.hops).or_default().push(ex.clone());
    }
    out
}
