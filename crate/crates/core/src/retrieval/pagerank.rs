//! Global PageRank used as the structure-salience prior.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::embedding::{rank_order, top_k_by, ScoredNode};
use super::pairs::{pair_order, unordered, PairPool, ScoredPair};
use super::RetrievalError;
use crate::graph::{Graph, NodeId};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PageRankConfig {
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PageRankConfig {
    fn default() -> Self {
        PageRankConfig {
            damping: 0.85,
            tol: 1e-10,
            max_iter: 200,
        }
    }
}

impl PageRankConfig {
    pub fn validate(&self) -> Result<(), RetrievalError> {
        if !(self.damping > 0.0 && self.damping < 1.0) {
            return Err(RetrievalError::InvalidParameter(format!(
                "damping must be in (0, 1), got {}",
                self.damping
            )));
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(RetrievalError::InvalidParameter(format!(
                "tol must be > 0, got {}",
                self.tol
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SalienceScores {
    pub scores: Vec<f64>,
    pub damping: f64,
    pub iterations_used: usize,
    /// L1 change of the final iteration.
    pub residual: f64,
    pub converged: bool,
}

impl SalienceScores {
    pub fn score(&self, v: NodeId) -> f64 {
        self.scores[v as usize]
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, RetrievalError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| RetrievalError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| RetrievalError::InvalidParameter(e.to_string()))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), RetrievalError> {
        let path = path.as_ref();
        let text = serde_json::to_string(self).expect("scores serialize");
        fs::write(path, text).map_err(|source| RetrievalError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

/// Power iteration with uniform teleport. Mass sitting on isolated nodes is
/// spread uniformly each round. Stops once the L1 change drops below `tol`
/// or after `max_iter` rounds; in the latter case the result carries
/// `converged = false`.
pub fn compute_pagerank(g: &Graph, cfg: PageRankConfig) -> Result<SalienceScores, RetrievalError> {
    cfg.validate()?;
    let n = g.node_count();
    if n == 0 {
        return Ok(SalienceScores {
            scores: Vec::new(),
            damping: cfg.damping,
            iterations_used: 0,
            residual: 0.0,
            converged: true,
        });
    }
    let d = cfg.damping;
    let nf = n as f64;
    let degree: Vec<usize> = (0..n).map(|i| g.row(i as NodeId).len()).collect();
    let mut x = vec![1.0 / nf; n];
    let mut next = vec![0.0; n];
    let mut share = vec![0.0; n];
    let mut residual = f64::INFINITY;
    let mut iterations = 0;

    while iterations < cfg.max_iter {
        iterations += 1;
        // Reductions stay sequential so results are identical for any
        // thread count.
        let dangling: f64 = (0..n).filter(|&i| degree[i] == 0).map(|i| x[i]).sum();
        par::fill(&mut share, |i| {
            if degree[i] == 0 {
                0.0
            } else {
                x[i] / degree[i] as f64
            }
        });
        let base = (1.0 - d) / nf + d * dangling / nf;
        par::fill(&mut next, |v| {
            let inflow: f64 = g.row(v as NodeId).iter().map(|&u| share[u as usize]).sum();
            base + d * inflow
        });
        residual = x.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut x, &mut next);
        if residual < cfg.tol {
            break;
        }
    }

    let total: f64 = x.iter().sum();
    for s in &mut x {
        *s /= total;
    }
    let converged = residual < cfg.tol;
    if !converged {
        log::warn!(
            "pagerank stopped after {iterations} iterations with residual {residual:e} (tol {:e})",
            cfg.tol
        );
    }
    Ok(SalienceScores {
        scores: x,
        damping: d,
        iterations_used: iterations,
        residual,
        converged,
    })
}

/// Most salient nodes, skipping `exclusions`.
pub fn salience_top_k_nodes(
    scores: &SalienceScores,
    k: usize,
    exclusions: &HashSet<NodeId>,
) -> Vec<ScoredNode> {
    if k == 0 {
        return Vec::new();
    }
    let scored = scores
        .scores
        .iter()
        .enumerate()
        .filter(|(i, _)| !exclusions.contains(&(*i as NodeId)))
        .map(|(i, &score)| ScoredNode {
            node: i as NodeId,
            score,
        })
        .collect();
    top_k_by(scored, k, rank_order)
}

/// Pool pairs ranked by mean endpoint salience, skipping the pair `exclude`.
pub fn salience_top_k_pairs(
    scores: &SalienceScores,
    pool: &PairPool,
    k: usize,
    exclude: Option<(NodeId, NodeId)>,
) -> Vec<ScoredPair> {
    if k == 0 {
        return Vec::new();
    }
    let exclude = exclude.map(|(u, v)| unordered(u, v));
    let scored = pool
        .entries()
        .iter()
        .filter(|e| Some(e.key()) != exclude)
        .map(|e| ScoredPair {
            u: e.u,
            v: e.v,
            label: e.label,
            score: 0.5 * (scores.score(e.u) + scores.score(e.v)),
        })
        .collect();
    top_k_by(scored, k, pair_order)
}
