//! Random candidate sets for the ambiguity scorers, with the values the
//! reference chain needs.

use std::path::Path;

use kgqa_core::kg::{parse_triples, Direction, EntityId, EntityRecord, KnowledgeGraph, Term};
use kgqa_core::toolbox::{EntityCandidate, PredicateCandidate};
use rand::rngs::StdRng;
use rand::Rng;

const WORDS: [&str; 12] =
    ["river", "novel", "city", "author", "fencer", "capital", "award", "born", "poet", "state", "country", "Alice"];

fn phrase(rng: &mut StdRng, max: usize) -> String {
    let n = rng.gen_range(0..=max);
    (0..n).map(|_| WORDS[rng.gen_range(0..WORDS.len())]).collect::<Vec<_>>().join(" ")
}

pub fn question(rng: &mut StdRng) -> String {
    let mut q = phrase(rng, 6);
    q.push('?');
    q
}

pub fn record(id: &str, name: &str, description: String, popularity: u64) -> EntityRecord {
    EntityRecord {
        id: EntityId::new(id).unwrap(),
        canonical_name: name.to_string(),
        aliases: vec![],
        description,
        types: vec![],
        popularity,
        is_cvt: false,
    }
}

pub struct EntityCase {
    pub question: String,
    pub candidates: Vec<EntityCandidate>,
}

impl EntityCase {
    pub fn random(rng: &mut StdRng) -> Self {
        let n = rng.gen_range(1..=8);
        let all_zero = rng.gen_bool(0.1);
        let candidates = (0..n)
            .map(|i| EntityCandidate {
                record: record(
                    &format!("m.{i}"),
                    "Same Name",
                    phrase(rng, 5),
                    if all_zero { 0 } else { rng.gen_range(0..1000) },
                ),
                match_score: 1.0,
            })
            .collect();
        Self { question: question(rng), candidates }
    }

    pub fn weights(&self) -> Vec<f64> {
        self.candidates.iter().map(|c| c.record.popularity as f64).collect()
    }

    pub fn contexts(&self) -> Vec<String> {
        self.candidates.iter().map(|c| super::chain::entity_context(&c.record.description)).collect()
    }

    pub fn scaled(&self, c: f64) -> Vec<EntityCandidate> {
        let mut out = self.candidates.clone();
        for cand in &mut out {
            cand.record.popularity = (cand.record.popularity as f64 * c) as u64;
        }
        out
    }
}

pub struct IntentCase {
    pub question: String,
    pub graph: KnowledgeGraph,
    pub candidates: Vec<PredicateCandidate>,
    pub frequencies: Vec<f64>,
    pub verbalized: Vec<String>,
}

impl IntentCase {
    pub fn random(rng: &mut StdRng) -> Self {
        let n = rng.gen_range(1..=8);
        let anchor_name = phrase(rng, 2);
        let anchor_name = if anchor_name.is_empty() { "Anchor".to_string() } else { anchor_name };
        let mut triples = String::new();
        let mut records = vec![record("m.anchor", &anchor_name, String::new(), 1)];
        let mut candidates = Vec::new();
        let mut frequencies = Vec::new();
        let mut verbalized = Vec::new();
        for k in 0..n {
            let word = WORDS[rng.gen_range(0..WORDS.len())].to_lowercase();
            let predicate = format!("dom.kind_{k}.{word}_of_{k}");
            let tail = format!("m.t{k}");
            let tail_name = format!("{} {k}", phrase(rng, 2));
            records.push(record(&tail, tail_name.trim(), String::new(), 1));
            let incoming = rng.gen_bool(0.3);
            if incoming {
                triples.push_str(&format!("{tail}\t{predicate}\tm.anchor\n"));
            } else {
                triples.push_str(&format!("m.anchor\t{predicate}\t{tail}\n"));
            }
            let extra = rng.gen_range(0..5);
            for i in 0..extra {
                triples.push_str(&format!("m.x{k}_{i}\t{predicate}\tm.y\n"));
            }
            frequencies.push((1 + extra) as f64);
            let label = format!("{word} of {k}");
            verbalized.push(if incoming {
                format!("{} {label} {anchor_name}.", tail_name.trim())
            } else {
                format!("{anchor_name} {label} {}.", tail_name.trim())
            });
            candidates.push(PredicateCandidate {
                predicate,
                sample_tail: Term::entity(&tail),
                semantic_score: 0.0,
                anchor: EntityId::new("m.anchor").unwrap(),
                direction: if incoming { Direction::Incoming } else { Direction::Outgoing },
            });
        }
        let graph = KnowledgeGraph::from_parts(parse_triples(Path::new("case"), &triples).unwrap(), records);
        Self { question: question(rng), graph, candidates, frequencies, verbalized }
    }
}
