//! Seeded synthetic graphs and environments for tests, benchmarks and demos.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{Environment, TemplateSet};
use crate::graph::{Graph, NodeId, NodeRecord, Split};
use crate::retrieval::{
    compute_pagerank, encode_text, EmbeddingIndex, HashedBagOfWords, PageRankConfig, PairEntry,
    PairPool, TextEncoder,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub nodes: usize,
    pub classes: usize,
    pub avg_degree: f64,
    /// Probability that an edge stays inside its class.
    pub homophily: f64,
    pub test_fraction: f64,
    pub dims: usize,
    pub words_per_node: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            nodes: 200,
            classes: 4,
            avg_degree: 6.0,
            homophily: 0.8,
            test_fraction: 0.2,
            dims: 64,
            words_per_node: 12,
            seed: 7,
        }
    }
}

pub fn class_name(c: usize) -> String {
    format!("topic-{c}")
}

/// Nodes with class-flavoured texts and homophilous edges.
pub fn labeled_graph(spec: &SyntheticSpec) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let classes = spec.classes.max(1);
    let class_of: Vec<usize> = (0..spec.nodes).map(|_| rng.gen_range(0..classes)).collect();
    let mut members = vec![Vec::new(); classes];
    for (i, &c) in class_of.iter().enumerate() {
        members[c].push(i as NodeId);
    }
    let nodes: Vec<NodeRecord> = class_of
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let words: Vec<String> = (0..spec.words_per_node)
                .map(|_| {
                    if rng.gen_bool(0.6) {
                        format!("c{c}term{}", rng.gen_range(0..20))
                    } else {
                        format!("common{}", rng.gen_range(0..50))
                    }
                })
                .collect();
            NodeRecord {
                id: i as u64,
                text: format!("Node {i}: {}", words.join(" ")),
                label: Some(class_name(c)),
                split: if rng.gen_bool(spec.test_fraction) {
                    Split::Test
                } else {
                    Split::Train
                },
            }
        })
        .collect();
    let n_edges = (spec.nodes as f64 * spec.avg_degree / 2.0).round() as usize;
    let mut edges = Vec::with_capacity(n_edges);
    if spec.nodes > 1 {
        for _ in 0..n_edges {
            let u = rng.gen_range(0..spec.nodes) as NodeId;
            let v = if rng.gen_bool(spec.homophily) {
                *members[class_of[u as usize]].choose(&mut rng).unwrap()
            } else {
                rng.gen_range(0..spec.nodes) as NodeId
            };
            edges.push((u, v));
        }
    }
    Graph::from_parts(nodes, &edges)
        .expect("synthetic graph is well formed")
        .0
}

pub fn text_embeddings(g: &Graph, enc: &dyn TextEncoder) -> EmbeddingIndex {
    let rows: Vec<Vec<f32>> = g
        .texts()
        .iter()
        .map(|t| encode_text(enc, t).into_iter().map(|x| x as f32).collect())
        .collect();
    if rows.is_empty() {
        return EmbeddingIndex::new(enc.dims(), Vec::new()).expect("dims are positive");
    }
    EmbeddingIndex::from_rows(&rows).expect("encoder output is finite")
}

/// Training-split pairs: every train–train edge as a positive, plus an equal
/// number of random non-edges as negatives.
pub fn pair_entries(g: &Graph, seed: u64) -> Vec<PairEntry> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let train: Vec<NodeId> = g.nodes_in_split(Split::Train).collect();
    let mut out = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for &u in &train {
        for &v in g.neighbors(u).unwrap() {
            if u < v && g.split(v) == Split::Train && seen.insert((u, v)) {
                out.push(PairEntry { u, v, label: 1 });
            }
        }
    }
    let positives = out.len();
    let mut attempts = 0;
    while out.len() < 2 * positives && train.len() > 1 && attempts < 100 * positives.max(1) {
        attempts += 1;
        let (a, b) = (
            *train.choose(&mut rng).unwrap(),
            *train.choose(&mut rng).unwrap(),
        );
        let (u, v) = (a.min(b), a.max(b));
        if u == v || g.neighbors(u).unwrap().binary_search(&v).is_ok() || !seen.insert((u, v)) {
            continue;
        }
        out.push(PairEntry { u, v, label: 0 });
    }
    out
}

/// A full environment over [`labeled_graph`] with hashed bag-of-words
/// embeddings, PageRank salience and a training pair pool.
pub fn environment(spec: &SyntheticSpec) -> Environment {
    let graph = labeled_graph(spec);
    let encoder = HashedBagOfWords::new(spec.dims);
    let embeddings = text_embeddings(&graph, &encoder);
    let salience =
        compute_pagerank(&graph, PageRankConfig::default()).expect("default config is valid");
    let pool = PairPool::new(pair_entries(&graph, spec.seed), &graph, &embeddings)
        .expect("synthetic pairs are valid");
    Environment {
        graph,
        embeddings,
        encoder: Box::new(encoder),
        salience,
        pool: Some(pool),
        templates: TemplateSet::builtin(),
    }
}
