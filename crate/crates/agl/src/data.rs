//! Loading an [`Environment`] from files or from the synthetic generator.

use std::path::PathBuf;

use agl_core::env::TemplateSet;
use agl_core::retrieval::{
    compute_pagerank, EmbeddingIndex, HashedBagOfWords, PairPool, SalienceScores,
};
use agl_core::synthetic::{environment, text_embeddings, SyntheticSpec};
use agl_core::{Environment, Graph};
use anyhow::{bail, Context, Result};
use clap::Args;

use crate::config::EngineConfig;

#[derive(Args, Debug, Clone, Default)]
pub struct DataArgs {
    /// Node JSON-lines file: {"id", "text", "label"?, "split"?} per line.
    #[arg(long)]
    pub graph: Option<PathBuf>,
    /// Edge list: one "u v" pair per line.
    #[arg(long)]
    pub edges: Option<PathBuf>,
    /// Binary embedding matrix. Computed from node texts when absent.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Reference pair pool, JSON-lines {"u", "v", "label"}.
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    /// Cached PageRank scores written by `index`.
    #[arg(long)]
    pub salience: Option<PathBuf>,
    /// Directory overriding the built-in prompt templates.
    #[arg(long)]
    pub templates: Option<PathBuf>,
    /// Hashed bag-of-words width used when embeddings are computed.
    #[arg(long, default_value_t = 64)]
    pub dims: usize,
    /// Use a seeded synthetic graph with this many nodes instead of files.
    #[arg(long)]
    pub synthetic: Option<usize>,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// TOML or JSON file overriding reward and tool defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

impl DataArgs {
    pub fn engine_config(&self) -> Result<EngineConfig> {
        match &self.config {
            Some(p) => EngineConfig::load(p),
            None => Ok(EngineConfig::default()),
        }
    }

    pub fn load_graph(&self) -> Result<Graph> {
        let (Some(nodes), Some(edges)) = (&self.graph, &self.edges) else {
            bail!("--graph and --edges are required unless --synthetic is given");
        };
        let (g, report) = Graph::load(nodes, edges)?;
        log::info!(
            "loaded {} nodes, {} edges ({} self-loops dropped, {} duplicates)",
            g.node_count(),
            g.edge_count(),
            report.self_loops_dropped,
            report.duplicate_edges
        );
        Ok(g)
    }

    pub fn load_embeddings(&self, g: &Graph) -> Result<EmbeddingIndex> {
        let idx = match &self.embeddings {
            Some(p) => EmbeddingIndex::read(p)?,
            None => {
                if self.dims == 0 {
                    bail!("--dims must be positive");
                }
                text_embeddings(g, &HashedBagOfWords::new(self.dims))
            }
        };
        idx.check_graph(g)?;
        Ok(idx)
    }

    pub fn load(&self) -> Result<Environment> {
        let cfg = self.engine_config()?;
        let mut env = if let Some(nodes) = self.synthetic {
            environment(&SyntheticSpec {
                nodes,
                dims: self.dims,
                seed: self.seed,
                ..Default::default()
            })
        } else {
            let graph = self.load_graph()?;
            let embeddings = self.load_embeddings(&graph)?;
            let salience = match &self.salience {
                Some(p) => {
                    let s = SalienceScores::read(p)?;
                    if s.scores.len() != graph.node_count() {
                        bail!(
                            "salience cache {} has {} scores for {} nodes",
                            p.display(),
                            s.scores.len(),
                            graph.node_count()
                        );
                    }
                    s
                }
                None => compute_pagerank(&graph, cfg.pagerank)?,
            };
            let pool = match &self.pairs {
                Some(p) => Some(
                    PairPool::load(p, &graph, &embeddings)
                        .with_context(|| format!("loading pairs {}", p.display()))?,
                ),
                None => None,
            };
            Environment {
                encoder: Box::new(HashedBagOfWords::new(embeddings.dims())),
                graph,
                embeddings,
                salience,
                pool,
                templates: TemplateSet::builtin(),
            }
        };
        if let Some(dir) = &self.templates {
            env.templates = TemplateSet::load_dir(dir)?;
        }
        Ok(env)
    }
}
