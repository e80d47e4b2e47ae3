//! Brute-force reference implementations of the four search tools and of
//! PageRank. Everything here works on a dense adjacency matrix and full sorts
//! so it shares no code path with the library.

#![allow(dead_code)]

use std::cmp::Ordering;

use agl_core::retrieval::{
    compute_pagerank, EmbeddingIndex, HashedBagOfWords, PageRankConfig, PairEntry, PairPool,
    SalienceScores, TextEncoder,
};
use agl_core::tools::{Annotation, Evidence, SearchContext, Subject};
use agl_core::{Graph, NodeId, Target, Tool, ToolConfig, TopK};
use rand::seq::SliceRandom;
use rand::Rng;

pub const DIMS: usize = 8;

pub struct Instance {
    pub n: usize,
    pub edges: Vec<(NodeId, NodeId)>,
    pub rows: Vec<Vec<f32>>,
    pub pairs: Vec<PairEntry>,
    pub lambda: f64,
    pub top_k: TopK,
}

pub struct Built {
    pub graph: Graph,
    pub index: EmbeddingIndex,
    pub pool: PairPool,
    pub salience: SalienceScores,
    pub encoder: HashedBagOfWords,
    pub adj: Vec<Vec<bool>>,
}

pub fn random_instance(rng: &mut impl Rng) -> Instance {
    let n = rng.gen_range(2..=256usize);
    let avg_deg = rng.gen_range(0.0..8.0);
    let m = (n as f64 * avg_deg / 2.0) as usize;
    let mut edges: Vec<(NodeId, NodeId)> = (0..m)
        .map(|_| (rng.gen_range(0..n) as NodeId, rng.gen_range(0..n) as NodeId))
        .collect();
    // a few dense local clusters so common neighbors and 2-hop overlap occur
    for _ in 0..rng.gen_range(0..4) {
        let c = rng.gen_range(0..n) as NodeId;
        for _ in 0..rng.gen_range(0..12) {
            edges.push((c, rng.gen_range(0..n) as NodeId));
        }
    }
    let mut rows: Vec<Vec<f32>> = (0..n)
        .map(|_| (0..DIMS).map(|_| rng.gen_range(-1.0f32..1.0)).collect())
        .collect();
    for i in 0..n {
        match rng.gen_range(0..20) {
            0 => rows[i] = vec![0.0; DIMS],
            1 => rows[i] = rows[rng.gen_range(0..n)].clone(),
            _ => {}
        }
    }
    let adj = adjacency(n, &edges);
    let mut pairs = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for _ in 0..rng.gen_range(0..=n.min(120)) {
        let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
        if a == b || !seen.insert((a.min(b), a.max(b))) {
            continue;
        }
        pairs.push(PairEntry {
            u: a as NodeId,
            v: b as NodeId,
            label: adj[a][b] as u8,
        });
    }
    let lambda = *[0.0, 0.5, 1.0].choose(rng).unwrap();
    let top_k = TopK {
        one_hop: rng.gen_range(0..8),
        two_hop: rng.gen_range(0..8),
        salience: rng.gen_range(0..8),
        dense: rng.gen_range(0..8),
    };
    Instance {
        n,
        edges,
        rows,
        pairs,
        lambda,
        top_k,
    }
}

pub fn adjacency(n: usize, edges: &[(NodeId, NodeId)]) -> Vec<Vec<bool>> {
    let mut adj = vec![vec![false; n]; n];
    for &(a, b) in edges {
        if a != b {
            adj[a as usize][b as usize] = true;
            adj[b as usize][a as usize] = true;
        }
    }
    adj
}

pub fn build(inst: &Instance) -> Built {
    let graph = Graph::from_edges(inst.n, &inst.edges).unwrap();
    let index = EmbeddingIndex::from_rows(&inst.rows).unwrap();
    let pool = PairPool::new(inst.pairs.clone(), &graph, &index).unwrap();
    let salience = compute_pagerank(&graph, PageRankConfig::default()).unwrap();
    Built {
        graph,
        index,
        pool,
        salience,
        encoder: HashedBagOfWords::new(DIMS),
        adj: adjacency(inst.n, &inst.edges),
    }
}

/// Exact-distance scope by definition: hop 1 is adjacency; hop 2 is
/// "reachable through some neighbor, not adjacent, not itself".
pub fn scope(adj: &[Vec<bool>], z: usize, hops: usize) -> Vec<usize> {
    let n = adj.len();
    (0..n)
        .filter(|&x| match hops {
            1 => adj[z][x],
            _ => x != z && !adj[z][x] && (0..n).any(|y| adj[z][y] && adj[y][x]),
        })
        .collect()
}

pub fn cos(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(-1.0, 1.0)
    }
}

fn row64(r: &[f32]) -> Vec<f64> {
    r.iter().map(|&x| x as f64).collect()
}

pub fn fusion(q: &[f64], hu: &[f32], hv: &[f32], lambda: f64) -> Vec<f64> {
    (0..q.len())
        .map(|i| lambda * q[i] + (1.0 - lambda) * (0.5 * (hu[i] as f64 + hv[i] as f64)))
        .collect()
}

fn by_score_then_id(a: &(usize, f64), b: &(usize, f64)) -> Ordering {
    b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0))
}

fn top(mut scored: Vec<(usize, f64)>, k: usize) -> Vec<(usize, f64)> {
    scored.sort_by(by_score_then_id);
    scored.truncate(k);
    scored
}

pub fn quota(size_u: usize, size_v: usize, r: usize) -> (usize, usize) {
    let (su, sv, r) = (size_u as i64, size_v as i64, r as i64);
    let half = (r + 1) / 2;
    let ku = su.min(half.max(r - sv));
    let kv = sv.min(r - ku);
    (ku as usize, kv as usize)
}

pub type Row = (String, Annotation, f64);

fn node_key(id: usize) -> String {
    format!("n{id}")
}

fn pair_key(u: NodeId, v: NodeId, label: u8) -> String {
    format!("p{u}-{v}-{label}")
}

pub fn oracle_neighborhood(
    b: &Built,
    inst: &Instance,
    hops: usize,
    t: &Target,
    q: &[f64],
    k: usize,
) -> Vec<Row> {
    let (u, v) = (t.u as usize, t.v as usize);
    let f = fusion(q, &inst.rows[u], &inst.rows[v], inst.lambda);
    let su: Vec<usize> = scope(&b.adj, u, hops)
        .into_iter()
        .filter(|&x| x != u && x != v)
        .collect();
    let sv: Vec<usize> = scope(&b.adj, v, hops)
        .into_iter()
        .filter(|&x| x != u && x != v)
        .collect();
    let common: Vec<usize> = su.iter().copied().filter(|x| sv.contains(x)).collect();
    let only_u: Vec<usize> = su.iter().copied().filter(|x| !common.contains(x)).collect();
    let only_v: Vec<usize> = sv.iter().copied().filter(|x| !common.contains(x)).collect();
    let r = k.saturating_sub(common.len());
    let (ku, kv) = quota(only_u.len(), only_v.len(), r);
    let score = |set: &[usize]| -> Vec<(usize, f64)> {
        set.iter()
            .map(|&x| (x, cos(&row64(&inst.rows[x]), &f)))
            .collect()
    };
    let mut out = Vec::new();
    for (set, kk, ann) in [
        (&common, k, Annotation::Common),
        (&only_u, ku, Annotation::ExclusiveU),
        (&only_v, kv, Annotation::ExclusiveV),
    ] {
        out.extend(
            top(score(set), kk)
                .into_iter()
                .map(|(x, s)| (node_key(x), ann, s)),
        );
    }
    out
}

pub fn oracle_salience(b: &Built, t: &Target, k: usize) -> Vec<Row> {
    match t.kind {
        agl_core::TargetKind::Node => {
            let scored = (0..b.graph.node_count())
                .filter(|&x| x != t.u as usize)
                .map(|x| (x, b.salience.scores[x]))
                .collect();
            top(scored, k)
                .into_iter()
                .map(|(x, s)| (node_key(x), Annotation::Global, s))
                .collect()
        }
        agl_core::TargetKind::Pair => {
            let scored = pool_excluding(b, t)
                .map(|(i, e)| {
                    (
                        i,
                        0.5 * (b.salience.scores[e.u as usize] + b.salience.scores[e.v as usize]),
                    )
                })
                .collect();
            pair_rows(b, top_pairs(b, scored, k))
        }
    }
}

pub fn oracle_dense(b: &Built, inst: &Instance, t: &Target, q: &[f64], k: usize) -> Vec<Row> {
    let (u, v) = (t.u as usize, t.v as usize);
    match t.kind {
        agl_core::TargetKind::Node => {
            let f = fusion(q, &inst.rows[u], &inst.rows[v], inst.lambda);
            let scored = (0..inst.n)
                .filter(|&x| x != u)
                .map(|x| (x, cos(&row64(&inst.rows[x]), &f)))
                .collect();
            top(scored, k)
                .into_iter()
                .map(|(x, s)| (node_key(x), Annotation::Global, s))
                .collect()
        }
        agl_core::TargetKind::Pair => {
            let mean = |a: usize, c: usize| -> Vec<f64> {
                (0..DIMS)
                    .map(|i| 0.5 * (inst.rows[a][i] as f64 + inst.rows[c][i] as f64))
                    .collect()
            };
            let tq = mean(u, v);
            let scored = pool_excluding(b, t)
                .map(|(i, e)| (i, cos(&mean(e.u as usize, e.v as usize), &tq)))
                .collect();
            pair_rows(b, top_pairs(b, scored, k))
        }
    }
}

fn pool_excluding<'a>(
    b: &'a Built,
    t: &'a Target,
) -> impl Iterator<Item = (usize, &'a PairEntry)> + 'a {
    b.pool
        .entries()
        .iter()
        .enumerate()
        .filter(move |(_, e)| !((e.u == t.u && e.v == t.v) || (e.u == t.v && e.v == t.u)))
}

fn top_pairs(b: &Built, mut scored: Vec<(usize, f64)>, k: usize) -> Vec<(usize, f64)> {
    let e = b.pool.entries();
    scored.sort_by(|x, y| {
        y.1.partial_cmp(&x.1)
            .unwrap()
            .then(e[x.0].u.cmp(&e[y.0].u))
            .then(e[x.0].v.cmp(&e[y.0].v))
    });
    scored.truncate(k);
    scored
}

fn pair_rows(b: &Built, ranked: Vec<(usize, f64)>) -> Vec<Row> {
    ranked
        .into_iter()
        .map(|(i, s)| {
            let e = b.pool.entries()[i];
            (pair_key(e.u, e.v, e.label), Annotation::WithLabel, s)
        })
        .collect()
}

pub fn evidence_rows(e: &Evidence) -> Vec<Row> {
    e.items
        .iter()
        .map(|it| {
            let key = match &it.subject {
                Subject::Node { id, .. } => node_key(*id as usize),
                Subject::Pair { u, v, label, .. } => pair_key(*u, *v, *label),
            };
            (key, it.annotation, it.score)
        })
        .collect()
}

/// Compares one tool call against its oracle. Keys and annotations must match
/// exactly; scores to 1e-12.
pub fn compare(tool: Tool, got: &[Row], want: &[Row]) -> Result<(), String> {
    let same = got.len() == want.len()
        && got
            .iter()
            .zip(want)
            .all(|(g, w)| g.0 == w.0 && g.1 == w.1 && (g.2 - w.2).abs() <= 1e-12);
    if same {
        Ok(())
    } else {
        Err(format!("{tool}: got {got:?}, want {want:?}"))
    }
}

/// Runs every tool on a handful of node and pair targets; returns the number
/// of calls checked.
pub fn check_instance(inst: &Instance, rng: &mut impl Rng) -> Result<usize, String> {
    let b = build(inst);
    let cfg = ToolConfig {
        top_k: inst.top_k,
        lambda_r: inst.lambda,
    };
    let ctx = SearchContext {
        graph: &b.graph,
        embeddings: &b.index,
        encoder: &b.encoder,
        salience: &b.salience,
        pool: Some(&b.pool),
    };
    let words = [
        "alpha", "beta", "gamma", "delta", "tripod", "hinge", "graph", "node",
    ];
    let mut checked = 0;
    for round in 0..6 {
        let u = rng.gen_range(0..inst.n) as NodeId;
        let target = if round % 2 == 0 {
            Target::node(u)
        } else {
            let mut v = rng.gen_range(0..inst.n) as NodeId;
            if v == u {
                v = (u + 1) % inst.n as NodeId;
            }
            if round == 5 && !inst.pairs.is_empty() {
                let p = inst.pairs[rng.gen_range(0..inst.pairs.len())];
                Target::pair(p.u, p.v)
            } else {
                Target::pair(u, v)
            }
        };
        let query: String = (0..rng.gen_range(0..5))
            .map(|_| *words.choose(rng).unwrap())
            .collect::<Vec<_>>()
            .join(" ");
        let q = b.encoder.encode(&query);
        for tool in Tool::ALL {
            let k = inst.top_k.get(tool);
            let got = evidence_rows(
                &ctx.search(tool, &target, &query, &cfg)
                    .map_err(|e| e.to_string())?,
            );
            let want = match tool {
                Tool::OneHop => oracle_neighborhood(&b, inst, 1, &target, &q, k),
                Tool::TwoHop => oracle_neighborhood(&b, inst, 2, &target, &q, k),
                Tool::Salience => oracle_salience(&b, &target, k),
                Tool::Dense => oracle_dense(&b, inst, &target, &q, k),
            };
            compare(tool, &got, &want)
                .map_err(|e| format!("{e} (target {target:?}, query {query:?})"))?;
            checked += 1;
        }
    }
    Ok(checked)
}

/// Dense power iteration for exactly `iters` steps with uniform teleport and
/// uniform redistribution of dangling mass.
pub fn oracle_pagerank(
    n: usize,
    edges: &[(NodeId, NodeId)],
    damping: f64,
    iters: usize,
) -> Vec<f64> {
    let adj = adjacency(n, edges);
    let deg: Vec<usize> = adj
        .iter()
        .map(|r| r.iter().filter(|&&x| x).count())
        .collect();
    let mut p = vec![1.0 / n as f64; n];
    for _ in 0..iters {
        let dangling: f64 = (0..n).filter(|&i| deg[i] == 0).map(|i| p[i]).sum();
        let mut next = vec![(1.0 - damping) / n as f64 + damping * dangling / n as f64; n];
        for i in 0..n {
            for j in 0..n {
                if adj[j][i] {
                    next[i] += damping * p[j] / deg[j] as f64;
                }
            }
        }
        p = next;
    }
    p
}
