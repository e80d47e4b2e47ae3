//! Graph-conditioned curriculum: analytic per-instance difficulty, tertile
//! strata and seeded per-stage sampling.
//!
//! Higher scores are easier. Node classification uses the Wilson lower bound
//! of neighbor-label agreement plus a log-degree prior; link prediction uses
//! the agreement between endpoint similarity and the edge label.

use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Graph, GraphError, NodeId, Split, Target, TargetKind};
use crate::par;
use crate::retrieval::{EmbeddingIndex, PairEntry};

pub const DEFAULT_Z: f64 = 1.96;
pub const DEFAULT_ETA: f64 = 0.05;

#[derive(Debug, Error)]
pub enum CurriculumError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("node {0} has no label")]
    Unlabeled(NodeId),
    #[error("stage {stage} asks for {requested} {stratum} instances but only {available} remain")]
    QuotaExceeded {
        stage: usize,
        stratum: Stratum,
        requested: usize,
        available: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stratum {
    Easy,
    Medium,
    Hard,
}

impl Stratum {
    pub const ALL: [Stratum; 3] = [Stratum::Easy, Stratum::Medium, Stratum::Hard];
}

impl fmt::Display for Stratum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stratum::Easy => "easy",
            Stratum::Medium => "medium",
            Stratum::Hard => "hard",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "lowercase")]
pub enum Components {
    Nc { wilson: f64, degree_term: f64 },
    Lp { sim: f64, label: u8 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifficultyScore {
    pub target: Target,
    pub score: f64,
    pub components: Components,
}

/// Fraction of labeled, non-test neighbors that share `v`'s label; 0.5 when
/// no neighbor qualifies.
pub fn neighbor_label_consistency(g: &Graph, v: NodeId) -> Result<f64, CurriculumError> {
    Ok(label_agreement(g, v)?.0)
}

fn label_agreement(g: &Graph, v: NodeId) -> Result<(f64, usize), CurriculumError> {
    let own = g.label(v).ok_or(CurriculumError::Unlabeled(v))?;
    let mut labeled = 0usize;
    let mut agree = 0usize;
    for &n in g.neighbors(v)? {
        if g.split(n) == Split::Test {
            continue;
        }
        if let Some(l) = g.label(n) {
            labeled += 1;
            if l == own {
                agree += 1;
            }
        }
    }
    if labeled == 0 {
        return Ok((0.5, 0));
    }
    Ok((agree as f64 / labeled as f64, labeled))
}

/// Wilson score lower bound for proportion `p` over `n` trials at normal
/// quantile `z`. Zero when `n` is zero or `p` is zero.
pub fn wilson_lower_bound(p: f64, n: f64, z: f64) -> f64 {
    if n <= 0.0 || p <= 0.0 {
        return 0.0;
    }
    let z2 = z * z;
    let centre = p + z2 / (2.0 * n);
    let spread = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((centre - spread) / (1.0 + z2 / n)).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NcDifficulty {
    pub wilson: f64,
    pub degree_term: f64,
    pub score: f64,
}

/// `WilsonLB(p̂, n = d) + η·ln(1 + d)`.
pub fn nc_difficulty(p_hat: f64, degree: usize, z: f64, eta: f64) -> NcDifficulty {
    let d = degree as f64;
    let wilson = wilson_lower_bound(p_hat, d, z);
    let degree_term = eta * (1.0 + d).ln();
    NcDifficulty {
        wilson,
        degree_term,
        score: wilson + degree_term,
    }
}

/// `y·sim + (1 − y)·(1 − sim)` with `sim` clamped to `[0, 1]`.
pub fn lp_difficulty(sim: f64, label: u8) -> f64 {
    let sim = sim.clamp(0.0, 1.0);
    if label == 1 {
        sim
    } else {
        1.0 - sim
    }
}

pub fn score_nc(
    g: &Graph,
    nodes: &[NodeId],
    z: f64,
    eta: f64,
) -> Result<Vec<DifficultyScore>, CurriculumError> {
    let scored = par::map(
        nodes,
        |&v| -> Result<(DifficultyScore, bool), CurriculumError> {
            let (p_hat, labeled) = label_agreement(g, v)?;
            let degree = g.degree(v)?;
            let parts = nc_difficulty(p_hat, degree, z, eta);
            let target = Target {
                gold: g.label(v).map(str::to_string),
                ..Target::node(v)
            };
            Ok((
                DifficultyScore {
                    target,
                    score: parts.score,
                    components: Components::Nc {
                        wilson: parts.wilson,
                        degree_term: parts.degree_term,
                    },
                },
                labeled < degree,
            ))
        },
    );
    let mut out = Vec::with_capacity(scored.len());
    let mut partial = 0usize;
    for item in scored {
        let (s, short) = item?;
        partial += short as usize;
        out.push(s);
    }
    if partial > 0 {
        log::info!("{partial} node(s) have fewer labeled neighbors than their degree; Wilson bound still uses the full degree");
    }
    Ok(out)
}

pub fn score_lp(pairs: &[PairEntry], idx: &EmbeddingIndex) -> Vec<DifficultyScore> {
    par::map(pairs, |e| {
        let (a, b) = (idx.row(e.u), idx.row(e.v));
        let (na, nb) = (idx.norm(e.u), idx.norm(e.v));
        let raw = if na == 0.0 || nb == 0.0 {
            0.0
        } else {
            a.iter()
                .zip(b)
                .map(|(&x, &y)| x as f64 * y as f64)
                .sum::<f64>()
                / (na * nb)
        };
        let sim = raw.clamp(0.0, 1.0);
        DifficultyScore {
            target: Target {
                gold: Some(if e.label == 1 { "yes" } else { "no" }.to_string()),
                ..Target::pair(e.u, e.v)
            },
            score: lp_difficulty(sim, e.label),
            components: Components::Lp {
                sim,
                label: e.label,
            },
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageQuota {
    pub easy: usize,
    pub medium: usize,
    pub hard: usize,
}

impl StageQuota {
    pub fn new(easy: usize, medium: usize, hard: usize) -> Self {
        StageQuota { easy, medium, hard }
    }

    pub fn get(&self, s: Stratum) -> usize {
        match s {
            Stratum::Easy => self.easy,
            Stratum::Medium => self.medium,
            Stratum::Hard => self.hard,
        }
    }

    /// Stage 1 and stage 2 quotas used for the large benchmarks.
    pub fn defaults() -> Vec<StageQuota> {
        vec![
            StageQuota::new(800, 500, 500),
            StageQuota::new(200, 500, 500),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub u: NodeId,
    pub v: NodeId,
    pub kind: TargetKind,
    pub score: f64,
    pub stratum: Stratum,
    /// 1-based stage number.
    pub stage: usize,
    /// Position within the stage.
    pub order: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurriculumPlan {
    /// Easy, medium, hard; each sorted by score descending.
    pub strata: [Vec<DifficultyScore>; 3],
    pub stage_quotas: Vec<StageQuota>,
    pub seed: u64,
    pub stages: Vec<Vec<PlanEntry>>,
}

impl CurriculumPlan {
    pub fn stratum(&self, s: Stratum) -> &[DifficultyScore] {
        &self.strata[s as usize]
    }

    pub fn entries(&self) -> impl Iterator<Item = &PlanEntry> {
        self.stages.iter().flatten()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in self.entries() {
            out.push_str(&serde_json::to_string(e).expect("plan entry serializes"));
            out.push('\n');
        }
        out
    }
}

fn easier_first(a: &DifficultyScore, b: &DifficultyScore) -> std::cmp::Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.target.u.cmp(&b.target.u))
        .then(a.target.v.cmp(&b.target.v))
}

/// Sorts by score (easiest first), cuts rank tertiles, then for each stage
/// draws its quota from every stratum without replacement. Draws do not
/// repeat across stages. Each stage lists easy, then medium, then hard, each
/// block easiest first.
pub fn stratify(
    mut scores: Vec<DifficultyScore>,
    quotas: &[StageQuota],
    seed: u64,
) -> Result<CurriculumPlan, CurriculumError> {
    scores.sort_by(easier_first);
    let n = scores.len();
    let sizes = [n.div_ceil(3), (n + 1) / 3, n / 3];
    let mut rest = scores;
    let hard = rest.split_off(sizes[0] + sizes[1]);
    let medium = rest.split_off(sizes[0]);
    let strata = [rest, medium, hard];

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shuffled: Vec<Vec<usize>> = strata
        .iter()
        .map(|s| {
            let mut order: Vec<usize> = (0..s.len()).collect();
            order.shuffle(&mut rng);
            order
        })
        .collect();

    let mut cursor = [0usize; 3];
    let mut stages = Vec::with_capacity(quotas.len());
    for (si, quota) in quotas.iter().enumerate() {
        let mut entries = Vec::new();
        for stratum in Stratum::ALL {
            let k = stratum as usize;
            let want = quota.get(stratum);
            let available = strata[k].len() - cursor[k];
            if want > available {
                return Err(CurriculumError::QuotaExceeded {
                    stage: si + 1,
                    stratum,
                    requested: want,
                    available,
                });
            }
            let mut picked: Vec<usize> = shuffled[k][cursor[k]..cursor[k] + want].to_vec();
            cursor[k] += want;
            // strata are already sorted, so index order is easiest-first
            picked.sort_unstable();
            entries.extend(picked.into_iter().map(|i| {
                let d = &strata[k][i];
                (d, stratum)
            }));
        }
        stages.push(
            entries
                .into_iter()
                .enumerate()
                .map(|(order, (d, stratum))| PlanEntry {
                    u: d.target.u,
                    v: d.target.v,
                    kind: d.target.kind,
                    score: d.score,
                    stratum,
                    stage: si + 1,
                    order,
                    gold: d.target.gold.clone(),
                })
                .collect(),
        );
    }
    Ok(CurriculumPlan {
        strata,
        stage_quotas: quotas.to_vec(),
        seed,
        stages,
    })
}
