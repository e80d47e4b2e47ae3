use std::cmp::Ordering;
use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::embedding::{norm, top_k_by, EmbeddingIndex};
use super::RetrievalError;
use crate::graph::{Graph, NodeId, Split};
use crate::par;

/// One labeled reference pair; `label` is 1 for an existing edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PairEntry {
    pub u: NodeId,
    pub v: NodeId,
    pub label: u8,
}

impl PairEntry {
    pub fn key(&self) -> (NodeId, NodeId) {
        unordered(self.u, self.v)
    }
}

pub(crate) fn unordered(u: NodeId, v: NodeId) -> (NodeId, NodeId) {
    if u <= v {
        (u, v)
    } else {
        (v, u)
    }
}

/// Labeled training pairs used as reference evidence for link prediction.
#[derive(Debug, Clone)]
pub struct PairPool {
    entries: Vec<PairEntry>,
    vectors: Vec<Vec<f64>>,
    norms: Vec<f64>,
}

impl PairPool {
    /// Validates entries against the graph (training split only, no self
    /// pairs, no repeated unordered pairs) and caches the mean endpoint
    /// embedding of each.
    pub fn new(
        entries: Vec<PairEntry>,
        g: &Graph,
        idx: &EmbeddingIndex,
    ) -> Result<Self, RetrievalError> {
        let mut seen = HashSet::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            let line = i + 1;
            for id in [e.u, e.v] {
                if g.check(id).is_err() || id as usize >= idx.rows() {
                    return Err(RetrievalError::PairInvalid {
                        line,
                        reason: format!("node {id} out of range"),
                    });
                }
            }
            if e.u == e.v {
                return Err(RetrievalError::PairInvalid {
                    line,
                    reason: format!("self pair ({}, {})", e.u, e.v),
                });
            }
            if e.label > 1 {
                return Err(RetrievalError::PairInvalid {
                    line,
                    reason: format!("label must be 0 or 1, got {}", e.label),
                });
            }
            if g.split(e.u) != Split::Train || g.split(e.v) != Split::Train {
                return Err(RetrievalError::PairInvalid {
                    line,
                    reason: format!("pair ({}, {}) is not in the training split", e.u, e.v),
                });
            }
            if !seen.insert(e.key()) {
                return Err(RetrievalError::PairInvalid {
                    line,
                    reason: format!("duplicate pair ({}, {})", e.u, e.v),
                });
            }
        }
        let vectors = par::map(&entries, |e| idx.mean_of(e.u, e.v));
        let norms = vectors.iter().map(|v| norm(v)).collect();
        Ok(PairPool {
            entries,
            vectors,
            norms,
        })
    }

    pub fn read_entries(path: impl AsRef<Path>) -> Result<Vec<PairEntry>, RetrievalError> {
        let path = path.as_ref();
        let io = |source| RetrievalError::Io {
            path: path.display().to_string(),
            source,
        };
        let file = File::open(path).map_err(io)?;
        let mut out = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(io)?;
            if line.trim().is_empty() {
                continue;
            }
            let e: PairEntry =
                serde_json::from_str(&line).map_err(|e| RetrievalError::PairInvalid {
                    line: i + 1,
                    reason: e.to_string(),
                })?;
            out.push(e);
        }
        Ok(out)
    }

    pub fn load(
        path: impl AsRef<Path>,
        g: &Graph,
        idx: &EmbeddingIndex,
    ) -> Result<Self, RetrievalError> {
        Self::new(Self::read_entries(path)?, g, idx)
    }

    pub fn entries(&self) -> &[PairEntry] {
        &self.entries
    }

    pub fn pair_vector(&self, i: usize) -> &[f64] {
        &self.vectors[i]
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScoredPair {
    pub u: NodeId,
    pub v: NodeId,
    pub label: u8,
    pub score: f64,
}

/// Score descending, then `(u, v)` ascending.
pub fn pair_order(a: &ScoredPair, b: &ScoredPair) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.u.cmp(&b.u))
        .then(a.v.cmp(&b.v))
}

/// Top-`k` pool entries by cosine between the target's mean embedding and
/// each entry's mean embedding. The target pair itself is never returned.
pub fn pair_dense_top_k(
    u: NodeId,
    v: NodeId,
    pool: &PairPool,
    idx: &EmbeddingIndex,
    k: usize,
) -> Vec<ScoredPair> {
    if k == 0 || pool.is_empty() {
        return Vec::new();
    }
    let query = idx.mean_of(u, v);
    let qn = norm(&query);
    let target = unordered(u, v);
    let scores = par::map_range(pool.len(), |i| {
        let pn = pool.norms[i];
        if pn == 0.0 || qn == 0.0 {
            return 0.0;
        }
        let dot: f64 = pool.vectors[i].iter().zip(&query).map(|(a, b)| a * b).sum();
        (dot / (pn * qn)).clamp(-1.0, 1.0)
    });
    let scored = pool
        .entries
        .iter()
        .zip(scores)
        .filter(|(e, _)| e.key() != target)
        .map(|(e, score)| ScoredPair {
            u: e.u,
            v: e.v,
            label: e.label,
            score,
        })
        .collect();
    top_k_by(scored, k, pair_order)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(rows: Vec<Vec<f32>>) -> (Graph, EmbeddingIndex) {
        let g = Graph::from_edges(rows.len(), &[]).unwrap();
        (g, EmbeddingIndex::from_rows(&rows).unwrap())
    }

    fn e(u: NodeId, v: NodeId, label: u8) -> PairEntry {
        PairEntry { u, v, label }
    }

    #[test]
    fn singleton_pool_returns_entry() {
        let (g, idx) = setup(vec![
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 1.0],
            vec![1.0, 0.5],
        ]);
        let pool = PairPool::new(vec![e(2, 3, 1)], &g, &idx).unwrap();
        let top = pair_dense_top_k(0, 1, &pool, &idx, 5);
        assert_eq!(top.len(), 1);
        assert_eq!((top[0].u, top[0].v, top[0].label), (2, 3, 1));
    }

    #[test]
    fn target_pair_is_excluded_in_either_orientation() {
        let (g, idx) = setup(vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]);
        let pool = PairPool::new(vec![e(1, 0, 1), e(0, 2, 0)], &g, &idx).unwrap();
        let top = pair_dense_top_k(0, 1, &pool, &idx, 5);
        assert_eq!(top.len(), 1);
        assert_eq!((top[0].u, top[0].v), (0, 2));
    }

    #[test]
    fn empty_pool_and_zero_k() {
        let (g, idx) = setup(vec![vec![1.0], vec![2.0]]);
        let pool = PairPool::new(vec![], &g, &idx).unwrap();
        assert!(pair_dense_top_k(0, 1, &pool, &idx, 3).is_empty());
        let pool = PairPool::new(vec![e(0, 1, 0)], &g, &idx).unwrap();
        assert!(pair_dense_top_k(0, 1, &pool, &idx, 0).is_empty());
    }

    #[test]
    fn validation_errors() {
        let (g, idx) = setup(vec![vec![1.0]; 4]);
        assert!(PairPool::new(vec![e(1, 1, 0)], &g, &idx).is_err());
        assert!(PairPool::new(vec![e(0, 1, 1), e(1, 0, 0)], &g, &idx).is_err());
        assert!(PairPool::new(vec![e(0, 9, 1)], &g, &idx).is_err());
        assert!(PairPool::new(vec![e(0, 1, 2)], &g, &idx).is_err());

        use crate::graph::NodeRecord;
        let nodes = (0..3)
            .map(|i| NodeRecord {
                id: i,
                text: String::new(),
                label: None,
                split: if i == 2 { Split::Test } else { Split::Train },
            })
            .collect();
        let (g2, _) = Graph::from_parts(nodes, &[]).unwrap();
        let idx2 = EmbeddingIndex::from_rows(&vec![vec![1.0]; 3]).unwrap();
        let err = PairPool::new(vec![e(0, 2, 1)], &g2, &idx2).unwrap_err();
        assert!(err.to_string().contains("training split"));
    }
}
