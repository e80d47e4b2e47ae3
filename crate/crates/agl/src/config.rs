//! Engine configuration file: partial overrides for reward constants, tool
//! settings, PageRank and service timeouts. TOML, or JSON when the file ends
//! in `.json`.

use std::path::Path;

use agl_core::retrieval::PageRankConfig;
use agl_core::reward::RewardConfig;
use agl_core::{Task, ToolConfig};
use anyhow::{bail, Context, Result};
use serde::Deserialize;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToolOverrides {
    pub one_hop: Option<usize>,
    pub two_hop: Option<usize>,
    pub pagerank: Option<usize>,
    pub similar: Option<usize>,
    pub lambda_r: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceSettings {
    pub idle_timeout_secs: u64,
}

impl Default for ServiceSettings {
    fn default() -> Self {
        ServiceSettings {
            idle_timeout_secs: 300,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub reward: RewardConfig,
    pub tools: ToolOverrides,
    pub pagerank: PageRankConfig,
    pub service: ServiceSettings,
}

impl EngineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: EngineConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        } else {
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if let Err(e) = self.reward.validate() {
            bail!("reward config: {e}");
        }
        if let Some(l) = self.tools.lambda_r {
            if !(0.0..=1.0).contains(&l) {
                bail!("tools.lambda_r must be in [0, 1], got {l}");
            }
        }
        self.pagerank.validate().context("pagerank config")?;
        Ok(())
    }

    /// Task defaults with the file's overrides applied.
    pub fn tool_config(&self, task: Task) -> ToolConfig {
        let mut c = ToolConfig::for_task(task);
        let t = &self.tools;
        if let Some(k) = t.one_hop {
            c.top_k.one_hop = k;
        }
        if let Some(k) = t.two_hop {
            c.top_k.two_hop = k;
        }
        if let Some(k) = t.pagerank {
            c.top_k.salience = k;
        }
        if let Some(k) = t.similar {
            c.top_k.dense = k;
        }
        if let Some(l) = t.lambda_r {
            c.lambda_r = l;
        }
        c
    }
}
