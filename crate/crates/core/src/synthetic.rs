//! Seeded synthetic graphs with compositional structure, used for
//! desk-scale experiments and demos.
//!
//! Entities are split into clusters arranged on a ring. Every relation
//! shifts a cluster by a fixed offset and links each entity to a few random
//! members of the shifted cluster, so any metapath lands in a predictable
//! cluster while the individual edges stay random.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::QuestionTemplate;
use crate::kg::{Direction, KgBuilder, KnowledgeGraph, NodeMeta};

const KINDS: [&str; 5] = ["kinase", "compound", "syndrome", "pathway", "tissue"];
const RELATIONS: [&str; 5] = ["activates", "binds", "inhibits", "regulates", "targets"];
const SHIFTS: [usize; 5] = [1, 2, 3, 5, 7];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub clusters: usize,
    pub cluster_size: usize,
    /// Edges from each entity per relation.
    pub fanout: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            clusters: 20,
            cluster_size: 10,
            fanout: 3,
            seed: 7,
        }
    }
}

pub fn entity_id(e: usize) -> String {
    format!("E{e:04}")
}

/// Display name: a kind word and a zero-padded number, e.g. `kinase 017`.
pub fn entity_name(e: usize, cluster_size: usize) -> String {
    let kind = KINDS[(e / cluster_size) % KINDS.len()];
    format!("{kind} {e:03}")
}

pub fn compositional_kg(config: &SyntheticConfig) -> KnowledgeGraph {
    let SyntheticConfig {
        clusters,
        cluster_size,
        fanout,
        seed,
    } = *config;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = KgBuilder::new();
    let n = clusters * cluster_size;
    for e in 0..n {
        b.add_node(
            &entity_id(e),
            NodeMeta {
                name: entity_name(e, cluster_size),
                kind: KINDS[(e / cluster_size) % KINDS.len()].to_owned(),
                synonyms: Vec::new(),
            },
        );
    }
    for e in 0..n {
        let cluster = e / cluster_size;
        for (rel, shift) in RELATIONS.iter().zip(SHIFTS) {
            let target = (cluster + shift) % clusters;
            for m in index::sample(&mut rng, cluster_size, fanout.min(cluster_size)) {
                b.add_triple(&entity_id(e), rel, &entity_id(target * cluster_size + m));
            }
        }
    }
    b.build()
}

/// Bare verb for "what does X ..." phrasings: `activates` -> `activate`.
fn base_form(verb: &str) -> &str {
    verb.strip_suffix('s').unwrap_or(verb)
}

fn template(id: String, rels: &[usize], forms: Vec<String>) -> QuestionTemplate {
    QuestionTemplate {
        id,
        path: rels
            .iter()
            .map(|&r| (RELATIONS[r].to_owned(), Direction::Forward))
            .collect(),
        text_forms: forms,
    }
}

/// Templates for the synthetic graph: five 1-hop, four 2-hop and four 3-hop.
pub fn compositional_templates() -> Vec<QuestionTemplate> {
    let mut out = Vec::new();
    for (r, rel) in RELATIONS.iter().enumerate() {
        out.push(template(
            format!("one_{rel}"),
            &[r],
            vec![
                format!("what does {{head}} {}?", base_form(rel)),
                format!("name everything that {{head}} directly {rel}"),
            ],
        ));
    }
    for (a, b) in [(0, 1), (2, 3), (4, 0), (1, 2)] {
        let (ra, rb) = (RELATIONS[a], RELATIONS[b]);
        out.push(template(
            format!("two_{ra}_{rb}"),
            &[a, b],
            vec![
                format!("what do the things that {{head}} {ra} in turn {}?", base_form(rb)),
                format!("which targets are reached when whatever {{head}} {ra} then {rb} them indirectly?"),
            ],
        ));
    }
    for (a, b, c) in [(0, 1, 2), (3, 4, 0), (1, 3, 4), (2, 0, 3)] {
        let (ra, rb, rc) = (RELATIONS[a], RELATIONS[b], RELATIONS[c]);
        out.push(template(
            format!("three_{ra}_{rb}_{rc}"),
            &[a, b, c],
            vec![
                format!("starting from {{head}}, follow {ra}, then {rb}, then {rc}: what is reached three steps away?"),
                format!("list the chain endpoints three hops from {{head}} along {ra} then {rb} then {rc}"),
            ],
        ));
    }
    out
}
