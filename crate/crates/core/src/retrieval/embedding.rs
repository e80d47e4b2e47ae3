use std::cmp::Ordering;
use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::Serialize;

use super::RetrievalError;
use crate::graph::{Graph, NodeId};
use crate::par;

const MAGIC: &[u8; 4] = b"AGLE";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

/// Dense node embedding matrix (row-major) with cached row norms.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingIndex {
    dims: usize,
    data: Vec<f32>,
    norms: Vec<f64>,
}

impl EmbeddingIndex {
    pub fn new(dims: usize, data: Vec<f32>) -> Result<Self, RetrievalError> {
        if dims == 0 {
            return Err(RetrievalError::ZeroDims);
        }
        if !data.len().is_multiple_of(dims) {
            return Err(RetrievalError::Truncated {
                expected: data.len().div_ceil(dims) * dims,
                got: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(RetrievalError::NonFinite { row: pos / dims });
        }
        let norms = data.chunks_exact(dims).map(norm_f32).collect();
        Ok(EmbeddingIndex { dims, data, norms })
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self, RetrievalError> {
        let dims = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * dims);
        for row in rows {
            if row.len() != dims {
                return Err(RetrievalError::DimensionMismatch {
                    expected: dims,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::new(dims, data)
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn rows(&self) -> usize {
        self.norms.len()
    }

    pub fn row(&self, i: NodeId) -> &[f32] {
        let i = i as usize;
        &self.data[i * self.dims..(i + 1) * self.dims]
    }

    pub fn norm(&self, i: NodeId) -> f64 {
        self.norms[i as usize]
    }

    pub fn norms(&self) -> &[f64] {
        &self.norms
    }

    /// Errors unless there is exactly one row per graph node.
    pub fn check_graph(&self, g: &Graph) -> Result<(), RetrievalError> {
        if self.rows() != g.node_count() {
            return Err(RetrievalError::RowCountMismatch {
                rows: self.rows(),
                nodes: g.node_count(),
            });
        }
        Ok(())
    }

    /// `½(h_u + h_v)`.
    pub fn mean_of(&self, u: NodeId, v: NodeId) -> Vec<f64> {
        self.row(u)
            .iter()
            .zip(self.row(v))
            .map(|(&a, &b)| 0.5 * (a as f64 + b as f64))
            .collect()
    }

    /// Cosine between row `i` and an arbitrary vector with precomputed norm.
    #[inline]
    pub fn cosine_with(&self, i: NodeId, query: &[f64], query_norm: f64) -> f64 {
        let row_norm = self.norm(i);
        if row_norm == 0.0 || query_norm == 0.0 {
            return 0.0;
        }
        let dot: f64 = self
            .row(i)
            .iter()
            .zip(query)
            .map(|(&a, &b)| a as f64 * b)
            .sum();
        (dot / (row_norm * query_norm)).clamp(-1.0, 1.0)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.data.len() * 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.rows() as u32).to_le_bytes());
        out.extend_from_slice(&(self.dims as u32).to_le_bytes());
        for x in &self.data {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, RetrievalError> {
        if bytes.len() < HEADER_LEN {
            return Err(RetrievalError::Truncated {
                expected: HEADER_LEN,
                got: bytes.len(),
            });
        }
        if &bytes[..4] != MAGIC {
            return Err(RetrievalError::BadMagic);
        }
        let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
        let version = word(4);
        if version != VERSION {
            return Err(RetrievalError::UnsupportedVersion(version));
        }
        let rows = word(8) as usize;
        let dims = word(12) as usize;
        let expected = HEADER_LEN + rows * dims * 4;
        if bytes.len() != expected {
            return Err(RetrievalError::Truncated {
                expected,
                got: bytes.len(),
            });
        }
        let data = bytes[HEADER_LEN..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::new(dims, data)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, RetrievalError> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|source| RetrievalError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), RetrievalError> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|source| RetrievalError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

fn norm_f32(row: &[f32]) -> f64 {
    row.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt()
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Cosine similarity; zero when either side has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

/// `λ·h_Q + (1 − λ)·½(h_u + h_v)`, left unnormalized.
pub fn fusion_embedding(
    query: &[f64],
    h_u: &[f32],
    h_v: &[f32],
    lambda_r: f64,
) -> Result<Vec<f64>, RetrievalError> {
    if !(0.0..=1.0).contains(&lambda_r) {
        return Err(RetrievalError::LambdaOutOfRange(lambda_r));
    }
    let dims = query.len();
    for got in [h_u.len(), h_v.len()] {
        if got != dims {
            return Err(RetrievalError::DimensionMismatch {
                expected: dims,
                got,
            });
        }
    }
    Ok(query
        .iter()
        .zip(h_u.iter().zip(h_v))
        .map(|(&q, (&a, &b))| {
            let x = 0.5 * (a as f64 + b as f64);
            lambda_r * q + (1.0 - lambda_r) * x
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScoredNode {
    pub node: NodeId,
    pub score: f64,
}

/// Score descending, then node id ascending.
pub fn rank_order(a: &ScoredNode, b: &ScoredNode) -> Ordering {
    b.score.total_cmp(&a.score).then(a.node.cmp(&b.node))
}

/// Keeps the best `k` under `cmp`, sorted.
pub(crate) fn top_k_by<T>(mut items: Vec<T>, k: usize, cmp: impl Fn(&T, &T) -> Ordering) -> Vec<T> {
    if k == 0 {
        return Vec::new();
    }
    if items.len() > k {
        items.select_nth_unstable_by(k - 1, &cmp);
        items.truncate(k);
    }
    items.sort_unstable_by(cmp);
    items
}

/// Top-`k` of `candidates` by cosine against `fusion`.
pub fn rank_by_score(
    candidates: &[NodeId],
    fusion: &[f64],
    idx: &EmbeddingIndex,
    k: usize,
) -> Vec<ScoredNode> {
    let qn = norm(fusion);
    let scored = candidates
        .iter()
        .map(|&node| ScoredNode {
            node,
            score: idx.cosine_with(node, fusion, qn),
        })
        .collect();
    top_k_by(scored, k, rank_order)
}

/// Exhaustive top-`k` cosine search over every row not in `exclusions`.
pub fn dense_top_k(
    query: &[f64],
    idx: &EmbeddingIndex,
    k: usize,
    exclusions: &HashSet<NodeId>,
) -> Result<Vec<ScoredNode>, RetrievalError> {
    if query.len() != idx.dims() {
        return Err(RetrievalError::DimensionMismatch {
            expected: idx.dims(),
            got: query.len(),
        });
    }
    if k == 0 {
        return Ok(Vec::new());
    }
    let qn = norm(query);
    let scores = par::map_range(idx.rows(), |i| idx.cosine_with(i as NodeId, query, qn));
    let scored = scores
        .into_iter()
        .enumerate()
        .filter(|(i, _)| !exclusions.contains(&(*i as NodeId)))
        .map(|(i, score)| ScoredNode {
            node: i as NodeId,
            score,
        })
        .collect();
    Ok(top_k_by(scored, k, rank_order))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn basis(n: usize) -> EmbeddingIndex {
        let rows: Vec<Vec<f32>> = (0..n)
            .map(|i| {
                let mut r = vec![0.0; n];
                r[i] = 1.0;
                r
            })
            .collect();
        EmbeddingIndex::from_rows(&rows).unwrap()
    }

    #[test]
    fn fusion_endpoints_and_midpoint() {
        let q = [3.0, -1.0];
        let (hu, hv) = ([1.0f32, 2.0], [3.0f32, 4.0]);
        assert_eq!(fusion_embedding(&q, &hu, &hv, 0.0).unwrap(), vec![2.0, 3.0]);
        assert_eq!(
            fusion_embedding(&q, &hu, &hv, 1.0).unwrap(),
            vec![3.0, -1.0]
        );
        let mid = fusion_embedding(&[1.0, 0.0], &[0.0, 1.0], &[0.0, 1.0], 0.5).unwrap();
        assert_eq!(mid, vec![0.5, 0.5]);
    }

    #[test]
    fn fusion_rejects_bad_input() {
        assert!(matches!(
            fusion_embedding(&[1.0], &[1.0], &[1.0], 1.5),
            Err(RetrievalError::LambdaOutOfRange(_))
        ));
        assert!(matches!(
            fusion_embedding(&[1.0, 2.0], &[1.0], &[1.0, 0.0], 0.5),
            Err(RetrievalError::DimensionMismatch {
                expected: 2,
                got: 1
            })
        ));
    }

    #[test]
    fn rank_by_score_orders_and_truncates() {
        // node embeddings chosen so cosines against e0 are 0.9, 0.5, 0.1
        let rows = vec![
            vec![0.9f32, (1.0f32 - 0.81).sqrt()],
            vec![0.5, (0.75f32).sqrt()],
            vec![0.1, (0.99f32).sqrt()],
        ];
        let idx = EmbeddingIndex::from_rows(&rows).unwrap();
        let top = rank_by_score(&[2, 0, 1], &[1.0, 0.0], &idx, 2);
        assert_eq!(top.iter().map(|s| s.node).collect::<Vec<_>>(), vec![0, 1]);
        assert!(rank_by_score(&[0, 1], &[1.0, 0.0], &idx, 0).is_empty());
        assert!(rank_by_score(&[], &[1.0, 0.0], &idx, 3).is_empty());
    }

    #[test]
    fn ties_break_by_ascending_id() {
        let idx = EmbeddingIndex::from_rows(&vec![vec![1.0f32, 1.0]; 6]).unwrap();
        let top = rank_by_score(&[5, 3, 1, 4, 2], &[0.3, 0.7], &idx, 3);
        assert_eq!(
            top.iter().map(|s| s.node).collect::<Vec<_>>(),
            vec![1, 2, 3]
        );
    }

    #[test]
    fn dense_top_k_basis_and_exclusions() {
        let idx = basis(6);
        let mut q = vec![0.0; 6];
        q[3] = 1.0;
        let top = dense_top_k(&q, &idx, 2, &HashSet::new()).unwrap();
        assert_eq!(
            top[0],
            ScoredNode {
                node: 3,
                score: 1.0
            }
        );
        assert_eq!(top[1].node, 0);

        let all: HashSet<NodeId> = (0..6).collect();
        assert!(dense_top_k(&q, &idx, 3, &all).unwrap().is_empty());

        let excl: HashSet<NodeId> = [3].into_iter().collect();
        let rest = dense_top_k(&q, &idx, 100, &excl).unwrap();
        assert_eq!(
            rest.iter().map(|s| s.node).collect::<Vec<_>>(),
            vec![0, 1, 2, 4, 5]
        );
        assert!(dense_top_k(&[1.0], &idx, 1, &excl).is_err());
    }

    #[test]
    fn zero_rows_score_zero() {
        let idx = EmbeddingIndex::from_rows(&[vec![0.0f32, 0.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(idx.cosine_with(0, &[1.0, 0.0], 1.0), 0.0);
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 2.0]), 0.0);
    }

    #[test]
    fn binary_format_roundtrip_and_errors() {
        let idx =
            EmbeddingIndex::from_rows(&[vec![1.0f32, -2.5, 0.0], vec![0.25, 8.0, -1.0]]).unwrap();
        let bytes = idx.to_bytes();
        assert_eq!(&bytes[..4], b"AGLE");
        assert_eq!(&bytes[4..8], &1u32.to_le_bytes());
        assert_eq!(&bytes[8..12], &2u32.to_le_bytes());
        assert_eq!(&bytes[12..16], &3u32.to_le_bytes());
        assert_eq!(&bytes[16..20], &1.0f32.to_le_bytes());
        assert_eq!(EmbeddingIndex::from_bytes(&bytes).unwrap(), idx);

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            EmbeddingIndex::from_bytes(&bad),
            Err(RetrievalError::BadMagic)
        ));
        assert!(matches!(
            EmbeddingIndex::from_bytes(&bytes[..bytes.len() - 1]),
            Err(RetrievalError::Truncated { .. })
        ));
        let mut v2 = bytes;
        v2[4] = 2;
        assert!(matches!(
            EmbeddingIndex::from_bytes(&v2),
            Err(RetrievalError::UnsupportedVersion(2))
        ));
    }
}
