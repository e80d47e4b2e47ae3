//! The four graph-native search tools and their document rendering.
//!
//! Neighborhood tools (1-hop, 2-hop) treat the target as a pair `(u, v)`
//! (`v = u` for a single node), take common neighbors first and fill the
//! remaining slots from each endpoint's exclusive neighbors with a balanced
//! quota. Every candidate is ranked by cosine against the fusion of the
//! query embedding and the target embedding. The global tools rank the whole
//! graph (or the labeled pair pool for pair targets) by PageRank salience or
//! by embedding similarity.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Graph, GraphError, NodeId, Target, TargetKind};
use crate::protocol::{DOCS_BEGIN, DOCS_END};
use crate::retrieval::{
    dense_top_k, fusion_embedding, pair_dense_top_k, rank_by_score, salience_top_k_nodes,
    salience_top_k_pairs, EmbeddingIndex, PairPool, RetrievalError, SalienceScores, ScoredNode,
    ScoredPair, TextEncoder,
};
use crate::task::Task;

#[derive(Debug, Error)]
pub enum ToolError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error("{0} search on a pair target needs a pair pool")]
    MissingPool(Tool),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tool {
    OneHop,
    TwoHop,
    Salience,
    Dense,
}

impl Tool {
    pub const ALL: [Tool; 4] = [Tool::OneHop, Tool::TwoHop, Tool::Salience, Tool::Dense];

    /// Name used in query tags and prompts.
    pub fn wire_name(self) -> &'static str {
        match self {
            Tool::OneHop => "1-hop",
            Tool::TwoHop => "2-hop",
            Tool::Salience => "pagerank",
            Tool::Dense => "similar",
        }
    }

    pub fn from_wire(name: &str) -> Option<Tool> {
        Tool::ALL.into_iter().find(|t| t.wire_name() == name)
    }
}

impl fmt::Display for Tool {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.wire_name())
    }
}

impl FromStr for Tool {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Tool::from_wire(s).ok_or_else(|| format!("unknown tool {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TopK {
    pub one_hop: usize,
    pub two_hop: usize,
    pub salience: usize,
    pub dense: usize,
}

impl Default for TopK {
    fn default() -> Self {
        TopK::for_task(Task::Nc)
    }
}

impl TopK {
    pub fn for_task(task: Task) -> Self {
        match task {
            Task::Nc => TopK {
                one_hop: 5,
                two_hop: 5,
                salience: 5,
                dense: 5,
            },
            Task::Lp => TopK {
                one_hop: 5,
                two_hop: 5,
                salience: 2,
                dense: 3,
            },
        }
    }

    pub fn get(&self, tool: Tool) -> usize {
        match tool {
            Tool::OneHop => self.one_hop,
            Tool::TwoHop => self.two_hop,
            Tool::Salience => self.salience,
            Tool::Dense => self.dense,
        }
    }

    pub fn uniform(k: usize) -> Self {
        TopK {
            one_hop: k,
            two_hop: k,
            salience: k,
            dense: k,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToolConfig {
    pub top_k: TopK,
    pub lambda_r: f64,
}

impl Default for ToolConfig {
    fn default() -> Self {
        ToolConfig::for_task(Task::Nc)
    }
}

impl ToolConfig {
    pub fn for_task(task: Task) -> Self {
        ToolConfig {
            top_k: TopK::for_task(task),
            lambda_r: 0.5,
        }
    }
}

/// Balanced split of `r` slots between two exclusive sets of sizes
/// `size_u` and `size_v`: `k_u = min(|U_u|, max(⌈r/2⌉, r − |U_v|))`,
/// `k_v = min(|U_v|, r − k_u)`.
pub fn quota_split(size_u: usize, size_v: usize, r: usize) -> (usize, usize) {
    let k_u = size_u.min(r.div_ceil(2).max(r.saturating_sub(size_v)));
    let k_v = size_v.min(r - k_u);
    (k_u, k_v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Annotation {
    Common,
    ExclusiveU,
    ExclusiveV,
    Global,
    WithLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Subject {
    Node {
        id: NodeId,
        text: String,
    },
    Pair {
        u: NodeId,
        v: NodeId,
        label: u8,
        text_u: String,
        text_v: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvidenceItem {
    pub subject: Subject,
    pub annotation: Annotation,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evidence {
    pub tool: Tool,
    pub items: Vec<EvidenceItem>,
    pub k_requested: usize,
}

impl Evidence {
    pub fn empty(tool: Tool, k: usize) -> Self {
        Evidence {
            tool,
            items: Vec::new(),
            k_requested: k,
        }
    }

    pub fn node_ids(&self) -> Vec<NodeId> {
        self.items
            .iter()
            .filter_map(|it| match it.subject {
                Subject::Node { id, .. } => Some(id),
                Subject::Pair { .. } => None,
            })
            .collect()
    }

    pub fn pairs(&self) -> Vec<(NodeId, NodeId)> {
        self.items
            .iter()
            .filter_map(|it| match it.subject {
                Subject::Pair { u, v, .. } => Some((u, v)),
                Subject::Node { .. } => None,
            })
            .collect()
    }
}

fn node_items(
    g: &Graph,
    ranked: Vec<ScoredNode>,
    annotation: Annotation,
) -> impl Iterator<Item = EvidenceItem> + '_ {
    ranked.into_iter().map(move |s| EvidenceItem {
        subject: Subject::Node {
            id: s.node,
            text: g.text(s.node).to_string(),
        },
        annotation,
        score: s.score,
    })
}

fn pair_items(g: &Graph, ranked: Vec<ScoredPair>) -> Vec<EvidenceItem> {
    ranked
        .into_iter()
        .map(|p| EvidenceItem {
            subject: Subject::Pair {
                u: p.u,
                v: p.v,
                label: p.label,
                text_u: g.text(p.u).to_string(),
                text_v: g.text(p.v).to_string(),
            },
            annotation: Annotation::WithLabel,
            score: p.score,
        })
        .collect()
}

fn query_fusion(
    idx: &EmbeddingIndex,
    enc: &dyn TextEncoder,
    target: &Target,
    query: &str,
    lambda_r: f64,
) -> Result<Vec<f64>, ToolError> {
    let h_q = enc.encode(query);
    if h_q.len() != idx.dims() {
        return Err(RetrievalError::DimensionMismatch {
            expected: idx.dims(),
            got: h_q.len(),
        }
        .into());
    }
    Ok(fusion_embedding(
        &h_q,
        idx.row(target.u),
        idx.row(target.v),
        lambda_r,
    )?)
}

fn sorted_intersection(a: &[NodeId], b: &[NodeId]) -> Vec<NodeId> {
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::new();
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn neighborhood_search(
    tool: Tool,
    scope: impl Fn(NodeId) -> Result<Vec<NodeId>, GraphError>,
    g: &Graph,
    idx: &EmbeddingIndex,
    enc: &dyn TextEncoder,
    target: &Target,
    query: &str,
    cfg: &ToolConfig,
) -> Result<Evidence, ToolError> {
    target.validate(g)?;
    let k = cfg.top_k.get(tool);
    let fusion = query_fusion(idx, enc, target, query, cfg.lambda_r)?;
    if k == 0 {
        return Ok(Evidence::empty(tool, k));
    }
    let (u, v) = (target.u, target.v);
    let not_target = |x: &NodeId| *x != u && *x != v;
    let scope_u: Vec<NodeId> = scope(u)?.into_iter().filter(not_target).collect();
    let scope_v: Vec<NodeId> = if u == v {
        scope_u.clone()
    } else {
        scope(v)?.into_iter().filter(not_target).collect()
    };
    let common = sorted_intersection(&scope_u, &scope_v);
    let exclusive = |s: &[NodeId]| -> Vec<NodeId> {
        s.iter()
            .copied()
            .filter(|x| common.binary_search(x).is_err())
            .collect()
    };
    let (only_u, only_v) = (exclusive(&scope_u), exclusive(&scope_v));
    let r = k.saturating_sub(common.len());
    let (k_u, k_v) = quota_split(only_u.len(), only_v.len(), r);

    let mut items: Vec<EvidenceItem> = node_items(
        g,
        rank_by_score(&common, &fusion, idx, k),
        Annotation::Common,
    )
    .collect();
    items.extend(node_items(
        g,
        rank_by_score(&only_u, &fusion, idx, k_u),
        Annotation::ExclusiveU,
    ));
    items.extend(node_items(
        g,
        rank_by_score(&only_v, &fusion, idx, k_v),
        Annotation::ExclusiveV,
    ));
    Ok(Evidence {
        tool,
        items,
        k_requested: k,
    })
}

/// 1-hop neighborhood search.
pub fn one_hop_search(
    g: &Graph,
    idx: &EmbeddingIndex,
    enc: &dyn TextEncoder,
    target: &Target,
    query: &str,
    cfg: &ToolConfig,
) -> Result<Evidence, ToolError> {
    neighborhood_search(
        Tool::OneHop,
        |z| g.neighbors(z).map(<[NodeId]>::to_vec),
        g,
        idx,
        enc,
        target,
        query,
        cfg,
    )
}

/// Same as [`one_hop_search`] with the exact-distance-2 neighborhood as scope.
pub fn two_hop_search(
    g: &Graph,
    idx: &EmbeddingIndex,
    enc: &dyn TextEncoder,
    target: &Target,
    query: &str,
    cfg: &ToolConfig,
) -> Result<Evidence, ToolError> {
    neighborhood_search(
        Tool::TwoHop,
        |z| g.two_hop(z),
        g,
        idx,
        enc,
        target,
        query,
        cfg,
    )
}

/// Globally salient nodes (node target) or reference pairs (pair target).
pub fn salience_search(
    g: &Graph,
    scores: &SalienceScores,
    target: &Target,
    cfg: &ToolConfig,
    pool: Option<&PairPool>,
) -> Result<Evidence, ToolError> {
    target.validate(g)?;
    let k = cfg.top_k.salience;
    let items = match target.kind {
        TargetKind::Node => {
            let excl: HashSet<NodeId> = target.endpoints().into_iter().collect();
            node_items(
                g,
                salience_top_k_nodes(scores, k, &excl),
                Annotation::Global,
            )
            .collect()
        }
        TargetKind::Pair => {
            let pool = pool.ok_or(ToolError::MissingPool(Tool::Salience))?;
            pair_items(
                g,
                salience_top_k_pairs(scores, pool, k, Some((target.u, target.v))),
            )
        }
    };
    Ok(Evidence {
        tool: Tool::Salience,
        items,
        k_requested: k,
    })
}

/// Embedding-similarity search over all nodes (node target) or over the
/// reference pair pool (pair target).
pub fn dense_search(
    g: &Graph,
    idx: &EmbeddingIndex,
    enc: &dyn TextEncoder,
    target: &Target,
    query: &str,
    cfg: &ToolConfig,
    pool: Option<&PairPool>,
) -> Result<Evidence, ToolError> {
    target.validate(g)?;
    let k = cfg.top_k.dense;
    let items = match target.kind {
        TargetKind::Node => {
            let fusion = query_fusion(idx, enc, target, query, cfg.lambda_r)?;
            let excl: HashSet<NodeId> = target.endpoints().into_iter().collect();
            node_items(g, dense_top_k(&fusion, idx, k, &excl)?, Annotation::Global).collect()
        }
        TargetKind::Pair => {
            let pool = pool.ok_or(ToolError::MissingPool(Tool::Dense))?;
            pair_items(g, pair_dense_top_k(target.u, target.v, pool, idx, k))
        }
    };
    Ok(Evidence {
        tool: Tool::Dense,
        items,
        k_requested: k,
    })
}

/// Everything the tools read, bundled for dispatch by tool name.
#[derive(Clone, Copy)]
pub struct SearchContext<'a> {
    pub graph: &'a Graph,
    pub embeddings: &'a EmbeddingIndex,
    pub encoder: &'a dyn TextEncoder,
    pub salience: &'a SalienceScores,
    pub pool: Option<&'a PairPool>,
}

impl SearchContext<'_> {
    pub fn search(
        &self,
        tool: Tool,
        target: &Target,
        query: &str,
        cfg: &ToolConfig,
    ) -> Result<Evidence, ToolError> {
        match tool {
            Tool::OneHop => one_hop_search(
                self.graph,
                self.embeddings,
                self.encoder,
                target,
                query,
                cfg,
            ),
            Tool::TwoHop => two_hop_search(
                self.graph,
                self.embeddings,
                self.encoder,
                target,
                query,
                cfg,
            ),
            Tool::Salience => salience_search(self.graph, self.salience, target, cfg, self.pool),
            Tool::Dense => dense_search(
                self.graph,
                self.embeddings,
                self.encoder,
                target,
                query,
                cfg,
                self.pool,
            ),
        }
    }
}

fn one_line(text: &str) -> String {
    if text.contains(['\n', '\r']) {
        text.split(['\n', '\r'])
            .filter(|s| !s.is_empty())
            .collect::<Vec<_>>()
            .join(" ")
    } else {
        text.to_string()
    }
}

fn scope_word(tool: Tool) -> &'static str {
    match tool {
        Tool::TwoHop => "two_hop",
        _ => "one_hop",
    }
}

fn render_item(tool: Tool, item: &EvidenceItem, task: Task) -> String {
    match &item.subject {
        Subject::Node { text, .. } => {
            let text = one_line(text);
            match (task, item.annotation) {
                (Task::Lp, Annotation::Common) => {
                    let tail = match tool {
                        Tool::TwoHop => {
                            "This neighbour is within two hops of both Node U and Node V."
                        }
                        _ => "This neighbour links both Node U and Node V.",
                    };
                    format!("[common {} neighbour] {text} {tail}", scope_word(tool))
                }
                (Task::Lp, Annotation::ExclusiveU) => {
                    format!("[{} neighbour of Node U] {text}", scope_word(tool))
                }
                (Task::Lp, Annotation::ExclusiveV) => {
                    format!("[{} neighbour of Node V] {text}", scope_word(tool))
                }
                _ => text,
            }
        }
        Subject::Pair {
            u,
            v,
            label,
            text_u,
            text_v,
        } => {
            let tag = match tool {
                Tool::Salience => "pagerank reference pair",
                _ => "similar pair",
            };
            let status = if *label == 1 {
                "1 (linked)"
            } else {
                "0 (not linked)"
            };
            format!(
                "[{tag}] Node {u}: {} | Node {v}: {} Edge status: {status}",
                one_line(text_u),
                one_line(text_v)
            )
        }
    }
}

/// Numbered evidence lines between the document delimiters. Byte-for-byte
/// deterministic for identical evidence.
pub fn render_documents(e: &Evidence, task: Task) -> String {
    let mut out = String::from(DOCS_BEGIN);
    out.push('\n');
    for (i, item) in e.items.iter().enumerate() {
        out.push_str(&format!(
            "({}) {}\n",
            i + 1,
            render_item(e.tool, item, task)
        ));
    }
    out.push_str(DOCS_END);
    out
}
