//! Immutable text-attributed graph in compressed sparse row form.
//!
//! Edges are symmetrized, deduplicated and stripped of self-loops at build
//! time, so every neighbor list is sorted ascending and `v ∈ N(u) ⇔ u ∈ N(v)`.

use std::collections::VecDeque;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type NodeId = u32;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}:{line}: malformed line: {reason}")]
    Malformed {
        file: String,
        line: usize,
        reason: String,
    },
    #[error("{file}:{line}: duplicate node id {id}")]
    DuplicateNode { file: String, line: usize, id: u64 },
    #[error("node ids must be dense 0..{count}; id {missing} is missing")]
    MissingNode { count: usize, missing: usize },
    #[error("{file}:{line}: dangling edge {u} {v} (node count {count})")]
    DanglingEdge {
        file: String,
        line: usize,
        u: u64,
        v: u64,
        count: usize,
    },
    #[error("node id {id} out of range (node count {count})")]
    OutOfRange { id: u64, count: usize },
    #[error("graph has {texts} texts for {count} nodes")]
    LengthMismatch { texts: usize, count: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    #[default]
    None,
}

/// Per-node attributes as they appear in the node file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: u64,
    pub text: String,
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub split: Split,
}

/// What the loader had to clean up.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub self_loops_dropped: usize,
    pub duplicate_edges: usize,
    pub empty_texts: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    offsets: Vec<usize>,
    targets: Vec<NodeId>,
    texts: Vec<String>,
    labels: Vec<Option<String>>,
    splits: Vec<Split>,
}

impl Graph {
    /// Builds a graph from node records (ids must be exactly `0..n`) and a raw
    /// edge list.
    pub fn from_parts(
        nodes: Vec<NodeRecord>,
        edges: &[(NodeId, NodeId)],
    ) -> Result<(Self, LoadReport), GraphError> {
        let n = nodes.len();
        let mut texts = vec![None; n];
        let mut labels = vec![None; n];
        let mut splits = vec![Split::None; n];
        for (line, rec) in nodes.into_iter().enumerate() {
            let idx =
                usize::try_from(rec.id)
                    .ok()
                    .filter(|&i| i < n)
                    .ok_or(GraphError::OutOfRange {
                        id: rec.id,
                        count: n,
                    })?;
            if texts[idx].is_some() {
                return Err(GraphError::DuplicateNode {
                    file: "<memory>".into(),
                    line: line + 1,
                    id: rec.id,
                });
            }
            texts[idx] = Some(rec.text);
            labels[idx] = rec.label;
            splits[idx] = rec.split;
        }
        let texts = texts
            .into_iter()
            .enumerate()
            .map(|(i, t)| {
                t.ok_or(GraphError::MissingNode {
                    count: n,
                    missing: i,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        for &(u, v) in edges {
            for id in [u, v] {
                if id as usize >= n {
                    return Err(GraphError::OutOfRange {
                        id: id as u64,
                        count: n,
                    });
                }
            }
        }
        Ok(Self::assemble(texts, labels, splits, edges))
    }

    /// Structure-only graph with empty texts, no labels and every node in the
    /// training split. Mostly useful for tests and synthetic workloads.
    pub fn from_edges(n: usize, edges: &[(NodeId, NodeId)]) -> Result<Self, GraphError> {
        let nodes = (0..n)
            .map(|i| NodeRecord {
                id: i as u64,
                text: String::new(),
                label: None,
                split: Split::Train,
            })
            .collect();
        Graph::from_parts(nodes, edges).map(|(g, _)| g)
    }

    fn assemble(
        texts: Vec<String>,
        labels: Vec<Option<String>>,
        splits: Vec<Split>,
        edges: &[(NodeId, NodeId)],
    ) -> (Self, LoadReport) {
        let n = texts.len();
        let mut report = LoadReport::default();
        let mut degree = vec![0usize; n];
        for &(u, v) in edges {
            if u == v {
                report.self_loops_dropped += 1;
                continue;
            }
            degree[u as usize] += 1;
            degree[v as usize] += 1;
        }
        let mut offsets = vec![0usize; n + 1];
        for i in 0..n {
            offsets[i + 1] = offsets[i] + degree[i];
        }
        let mut cursor = offsets.clone();
        let mut raw = vec![0 as NodeId; offsets[n]];
        for &(u, v) in edges {
            if u == v {
                continue;
            }
            raw[cursor[u as usize]] = v;
            cursor[u as usize] += 1;
            raw[cursor[v as usize]] = u;
            cursor[v as usize] += 1;
        }

        // Sort and dedup each row, then compact.
        let mut targets = Vec::with_capacity(raw.len());
        let mut compact = vec![0usize; n + 1];
        let mut dup_halves = 0usize;
        for i in 0..n {
            let row = &mut raw[offsets[i]..offsets[i + 1]];
            row.sort_unstable();
            let before = targets.len();
            for &t in row.iter() {
                if targets.len() > before && *targets.last().unwrap() == t {
                    dup_halves += 1;
                } else {
                    targets.push(t);
                }
            }
            compact[i + 1] = targets.len();
        }
        report.duplicate_edges = dup_halves / 2;
        report.empty_texts = texts
            .iter()
            .enumerate()
            .filter(|(_, t)| t.is_empty())
            .map(|(i, _)| i as NodeId)
            .collect();

        if report.self_loops_dropped > 0 {
            log::warn!("dropped {} self-loop edge(s)", report.self_loops_dropped);
        }
        if report.duplicate_edges > 0 {
            log::info!("collapsed {} duplicate edge(s)", report.duplicate_edges);
        }
        if !report.empty_texts.is_empty() {
            log::warn!("{} node(s) have empty text", report.empty_texts.len());
        }

        let graph = Graph {
            offsets: compact,
            targets,
            texts,
            labels,
            splits,
        };
        (graph, report)
    }

    /// Loads a node JSON-lines file and a whitespace-separated edge file.
    pub fn load(
        nodes_path: impl AsRef<Path>,
        edges_path: impl AsRef<Path>,
    ) -> Result<(Self, LoadReport), GraphError> {
        let nodes_path = nodes_path.as_ref();
        let edges_path = edges_path.as_ref();
        let nodes = read_nodes(nodes_path)?;
        let n = nodes.len();
        let edges = read_edges(edges_path, n)?;
        let mut texts = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        let mut splits = Vec::with_capacity(n);
        for rec in nodes {
            texts.push(rec.text);
            labels.push(rec.label);
            splits.push(rec.split);
        }
        Ok(Self::assemble(texts, labels, splits, &edges))
    }

    pub fn node_count(&self) -> usize {
        self.texts.len()
    }

    pub fn edge_count(&self) -> usize {
        self.targets.len() / 2
    }

    pub fn check(&self, z: NodeId) -> Result<(), GraphError> {
        if (z as usize) < self.node_count() {
            Ok(())
        } else {
            Err(GraphError::OutOfRange {
                id: z as u64,
                count: self.node_count(),
            })
        }
    }

    /// The 1-hop neighborhood of `z`, sorted ascending.
    pub fn neighbors(&self, z: NodeId) -> Result<&[NodeId], GraphError> {
        self.check(z)?;
        Ok(self.row(z))
    }

    #[inline]
    pub(crate) fn row(&self, z: NodeId) -> &[NodeId] {
        let z = z as usize;
        &self.targets[self.offsets[z]..self.offsets[z + 1]]
    }

    pub fn degree(&self, z: NodeId) -> Result<usize, GraphError> {
        self.check(z)?;
        Ok(self.row(z).len())
    }

    /// Nodes at shortest-path distance exactly two from `z`, sorted ascending.
    pub fn two_hop(&self, z: NodeId) -> Result<Vec<NodeId>, GraphError> {
        self.check(z)?;
        let first = self.row(z);
        let mut out: Vec<NodeId> = first
            .iter()
            .flat_map(|&m| self.row(m).iter().copied())
            .filter(|&w| w != z && first.binary_search(&w).is_err())
            .collect();
        out.sort_unstable();
        out.dedup();
        Ok(out)
    }

    /// Breadth-first distances from `source`, `None` for unreachable nodes.
    pub fn bfs_distances(&self, source: NodeId) -> Result<Vec<Option<usize>>, GraphError> {
        self.check(source)?;
        let mut dist = vec![None; self.node_count()];
        let mut queue = VecDeque::new();
        dist[source as usize] = Some(0);
        queue.push_back(source);
        while let Some(x) = queue.pop_front() {
            let d = dist[x as usize].unwrap();
            for &y in self.row(x) {
                if dist[y as usize].is_none() {
                    dist[y as usize] = Some(d + 1);
                    queue.push_back(y);
                }
            }
        }
        Ok(dist)
    }

    pub fn text(&self, z: NodeId) -> &str {
        &self.texts[z as usize]
    }

    pub fn label(&self, z: NodeId) -> Option<&str> {
        self.labels[z as usize].as_deref()
    }

    pub fn split(&self, z: NodeId) -> Split {
        self.splits[z as usize]
    }

    pub fn texts(&self) -> &[String] {
        &self.texts
    }

    /// Distinct labels in first-seen order.
    pub fn label_space(&self) -> Vec<String> {
        let mut seen = Vec::<String>::new();
        for l in self.labels.iter().flatten() {
            if !seen.iter().any(|s| s == l) {
                seen.push(l.clone());
            }
        }
        seen
    }

    pub fn nodes_in_split(&self, split: Split) -> impl Iterator<Item = NodeId> + '_ {
        self.splits
            .iter()
            .enumerate()
            .filter(move |(_, s)| **s == split)
            .map(|(i, _)| i as NodeId)
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> GraphError + '_ {
    move |source| GraphError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn read_nodes(path: &Path) -> Result<Vec<NodeRecord>, GraphError> {
    let file = File::open(path).map_err(io_err(path))?;
    let fname = path.display().to_string();
    let mut records: Vec<Option<NodeRecord>> = Vec::new();
    let mut count = 0usize;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: NodeRecord = serde_json::from_str(&line).map_err(|e| GraphError::Malformed {
            file: fname.clone(),
            line: i + 1,
            reason: e.to_string(),
        })?;
        let idx = rec.id as usize;
        if idx >= records.len() {
            records.resize(idx + 1, None);
        }
        if records[idx].is_some() {
            return Err(GraphError::DuplicateNode {
                file: fname,
                line: i + 1,
                id: rec.id,
            });
        }
        records[idx] = Some(rec);
        count += 1;
    }
    if count != records.len() {
        let missing = records.iter().position(Option::is_none).unwrap();
        return Err(GraphError::MissingNode { count, missing });
    }
    Ok(records.into_iter().map(Option::unwrap).collect())
}

fn read_edges(path: &Path, n: usize) -> Result<Vec<(NodeId, NodeId)>, GraphError> {
    let file = File::open(path).map_err(io_err(path))?;
    let fname = path.display().to_string();
    let mut edges = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let malformed = |reason: &str| GraphError::Malformed {
            file: fname.clone(),
            line: i + 1,
            reason: reason.to_string(),
        };
        let mut parts = trimmed.split_whitespace();
        let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(malformed("expected two node ids"));
        };
        let u: u64 = a
            .parse()
            .map_err(|_| malformed("node id is not a non-negative integer"))?;
        let v: u64 = b
            .parse()
            .map_err(|_| malformed("node id is not a non-negative integer"))?;
        if u as usize >= n || v as usize >= n || u > NodeId::MAX as u64 || v > NodeId::MAX as u64 {
            return Err(GraphError::DanglingEdge {
                file: fname,
                line: i + 1,
                u,
                v,
                count: n,
            });
        }
        edges.push((u as NodeId, v as NodeId));
    }
    Ok(edges)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetKind {
    Node,
    Pair,
}

impl fmt::Display for TargetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TargetKind::Node => "node",
            TargetKind::Pair => "pair",
        })
    }
}

/// The instance a rollout is about: a single node (classification) or a node
/// pair (link prediction). For node targets `v == u`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Target {
    pub kind: TargetKind,
    pub u: NodeId,
    pub v: NodeId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<String>,
}

impl Target {
    pub fn node(u: NodeId) -> Self {
        Target {
            kind: TargetKind::Node,
            u,
            v: u,
            gold: None,
        }
    }

    pub fn pair(u: NodeId, v: NodeId) -> Self {
        Target {
            kind: TargetKind::Pair,
            u,
            v,
            gold: None,
        }
    }

    pub fn with_gold(mut self, gold: impl Into<String>) -> Self {
        self.gold = Some(gold.into());
        self
    }

    pub fn validate(&self, g: &Graph) -> Result<(), GraphError> {
        g.check(self.u)?;
        g.check(self.v)?;
        if self.kind == TargetKind::Node && self.u != self.v {
            return Err(GraphError::OutOfRange {
                id: self.v as u64,
                count: g.node_count(),
            });
        }
        Ok(())
    }

    /// Target endpoints, deduplicated.
    pub fn endpoints(&self) -> Vec<NodeId> {
        if self.u == self.v {
            vec![self.u]
        } else {
            vec![self.u, self.v]
        }
    }
}
