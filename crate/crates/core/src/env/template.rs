//! Prompt templates with `{{PLACEHOLDER}}` syntax.
//!
//! A template id is `nc-<dataset>` or `lp-<dataset>`. NC datasets come from
//! `nc-<dataset>.txt` insert files; LP datasets from the bracketed keys of
//! `lp_relations.txt`.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use thiserror::Error;

use crate::task::Task;

const NC_CORE: &str = include_str!("../../templates/nc_core.txt");
const LP_CORE: &str = include_str!("../../templates/lp_core.txt");
const LP_RELATIONS: &str = include_str!("../../templates/lp_relations.txt");
const LP_LIMITS: &str = include_str!("../../templates/lp_limits.txt");
const NC_INSERTS: [(&str, &str); 4] = [
    ("arxiv", include_str!("../../templates/nc-arxiv.txt")),
    ("pubmed", include_str!("../../templates/nc-pubmed.txt")),
    ("amazon", include_str!("../../templates/nc-amazon.txt")),
    ("reddit", include_str!("../../templates/nc-reddit.txt")),
];

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("unknown template id {0:?}")]
    UnknownTemplate(String),
    #[error("template {template:?} has no value for {{{{{name}}}}}")]
    MissingPlaceholder { template: String, name: String },
    #[error("template {template:?} does not apply to task {task}")]
    WrongTask { template: String, task: Task },
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Parses `NAME:` headed sections. A header is a line made of uppercase
/// letters and underscores followed by a colon.
pub fn parse_sections(text: &str) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    let mut current: Option<(String, Vec<&str>)> = None;
    for line in text.lines() {
        let header = line
            .strip_suffix(':')
            .filter(|h| !h.is_empty() && h.chars().all(|c| c.is_ascii_uppercase() || c == '_'));
        if let Some(h) = header {
            if let Some((name, body)) = current.take() {
                out.insert(name, join_trimmed(&body));
            }
            current = Some((h.to_string(), Vec::new()));
        } else if let Some((_, body)) = current.as_mut() {
            body.push(line);
        }
    }
    if let Some((name, body)) = current {
        out.insert(name, join_trimmed(&body));
    }
    out
}

fn join_trimmed(lines: &[&str]) -> String {
    let end = lines
        .iter()
        .rposition(|l| !l.trim().is_empty())
        .map_or(0, |i| i + 1);
    let start = lines[..end]
        .iter()
        .position(|l| !l.trim().is_empty())
        .unwrap_or(end);
    lines[start..end].join("\n")
}

/// Parses `[a/b]` keyed blocks; each key in a slash list maps to the block.
pub fn parse_relations(text: &str) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    let mut keys: Vec<String> = Vec::new();
    let mut body: Vec<&str> = Vec::new();
    let mut flush = |keys: &mut Vec<String>, body: &mut Vec<&str>| {
        let text = join_trimmed(body);
        for k in keys.drain(..) {
            out.insert(k, text.clone());
        }
        body.clear();
    };
    for line in text.lines() {
        let t = line.trim();
        if t.starts_with('[') && t.ends_with(']') {
            flush(&mut keys, &mut body);
            keys = t[1..t.len() - 1]
                .split('/')
                .map(|k| k.trim().to_string())
                .collect();
        } else if !keys.is_empty() {
            body.push(line);
        }
    }
    flush(&mut keys, &mut body);
    out
}

#[derive(Debug, Clone)]
pub struct TemplateSet {
    nc_core: String,
    lp_core: String,
    lp_limits: String,
    nc_inserts: BTreeMap<String, BTreeMap<String, String>>,
    lp_relations: BTreeMap<String, String>,
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self::builtin()
    }
}

/// Values for a render: structural values may themselves contain
/// placeholders; literal values are inserted verbatim.
#[derive(Debug, Default, Clone)]
pub struct Values {
    structural: HashMap<String, String>,
    literal: HashMap<String, String>,
}

impl Values {
    pub fn structural(&mut self, k: &str, v: impl Into<String>) -> &mut Self {
        self.structural.insert(k.to_string(), v.into());
        self
    }

    pub fn literal(&mut self, k: &str, v: impl Into<String>) -> &mut Self {
        self.literal.insert(k.to_string(), v.into());
        self
    }
}

impl TemplateSet {
    pub fn builtin() -> Self {
        TemplateSet {
            nc_core: NC_CORE.to_string(),
            lp_core: LP_CORE.to_string(),
            lp_limits: parse_sections(LP_LIMITS)
                .remove("SEARCH_LIMITS_DESC")
                .unwrap_or_default(),
            nc_inserts: NC_INSERTS
                .iter()
                .map(|(k, v)| (k.to_string(), parse_sections(v)))
                .collect(),
            lp_relations: parse_relations(LP_RELATIONS),
        }
    }

    /// Built-in templates overridden by whatever files exist in `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self, TemplateError> {
        let mut set = Self::builtin();
        let read = |name: &str| -> Result<Option<String>, TemplateError> {
            let p = dir.join(name);
            if !p.exists() {
                return Ok(None);
            }
            std::fs::read_to_string(&p)
                .map(Some)
                .map_err(|source| TemplateError::Io {
                    path: p.display().to_string(),
                    source,
                })
        };
        if let Some(t) = read("nc_core.txt")? {
            set.nc_core = t;
        }
        if let Some(t) = read("lp_core.txt")? {
            set.lp_core = t;
        }
        if let Some(t) = read("lp_relations.txt")? {
            set.lp_relations = parse_relations(&t);
        }
        if let Some(t) = read("lp_limits.txt")? {
            set.lp_limits = parse_sections(&t)
                .remove("SEARCH_LIMITS_DESC")
                .unwrap_or_default();
        }
        let entries = std::fs::read_dir(dir).map_err(|source| TemplateError::Io {
            path: dir.display().to_string(),
            source,
        })?;
        for entry in entries.flatten() {
            let name = entry.file_name().to_string_lossy().into_owned();
            if let Some(ds) = name
                .strip_prefix("nc-")
                .and_then(|n| n.strip_suffix(".txt"))
            {
                if let Some(t) = read(&name)? {
                    set.nc_inserts.insert(ds.to_string(), parse_sections(&t));
                }
            }
        }
        Ok(set)
    }

    pub fn ids(&self) -> Vec<String> {
        self.nc_inserts
            .keys()
            .map(|k| format!("nc-{k}"))
            .chain(self.lp_relations.keys().map(|k| format!("lp-{k}")))
            .collect()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.resolve(id).is_ok()
    }

    fn resolve<'a>(&self, id: &'a str) -> Result<(Task, &'a str), TemplateError> {
        let unknown = || TemplateError::UnknownTemplate(id.to_string());
        let (task, ds) = id.split_once('-').ok_or_else(unknown)?;
        match task {
            "nc" if self.nc_inserts.contains_key(ds) => Ok((Task::Nc, ds)),
            "lp" if self.lp_relations.contains_key(ds) => Ok((Task::Lp, ds)),
            _ => Err(unknown()),
        }
    }

    pub fn task_of(&self, id: &str) -> Result<Task, TemplateError> {
        self.resolve(id).map(|(t, _)| t)
    }

    /// Renders template `id`. The dataset inserts are added to `values`
    /// before substitution.
    pub fn render(&self, id: &str, values: &Values) -> Result<String, TemplateError> {
        let (task, ds) = self.resolve(id)?;
        let mut v = values.clone();
        let core = match task {
            Task::Nc => {
                for (k, s) in &self.nc_inserts[ds] {
                    v.structural.entry(k.clone()).or_insert_with(|| s.clone());
                }
                &self.nc_core
            }
            Task::Lp => {
                v.structural
                    .entry("SEARCH_LIMITS_DESC".into())
                    .or_insert_with(|| self.lp_limits.clone());
                v.structural
                    .entry("RELATION_DESC".into())
                    .or_insert_with(|| self.lp_relations[ds].clone());
                v.literal
                    .entry("DATASET".into())
                    .or_insert_with(|| ds.to_string());
                &self.lp_core
            }
        };
        let mut out = String::with_capacity(core.len() * 2);
        substitute(core, &v, id, 0, &mut out)?;
        Ok(out)
    }
}

fn substitute(
    text: &str,
    v: &Values,
    id: &str,
    depth: usize,
    out: &mut String,
) -> Result<(), TemplateError> {
    let mut rest = text;
    while let Some(open) = rest.find("{{") {
        let Some(close) = rest[open + 2..].find("}}") else {
            break;
        };
        let name = &rest[open + 2..open + 2 + close];
        out.push_str(&rest[..open]);
        if let Some(s) = v.literal.get(name) {
            out.push_str(s);
        } else if let (Some(s), true) = (v.structural.get(name), depth < 4) {
            substitute(s, v, id, depth + 1, out)?;
        } else {
            return Err(TemplateError::MissingPlaceholder {
                template: id.to_string(),
                name: name.to_string(),
            });
        }
        rest = &rest[open + 2 + close + 2..];
    }
    out.push_str(rest);
    Ok(())
}
