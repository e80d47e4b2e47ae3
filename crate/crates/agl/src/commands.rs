//! Subcommand implementations.

use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use agl_core::curriculum::{score_lp, score_nc, stratify, StageQuota, DEFAULT_ETA, DEFAULT_Z};
use agl_core::env::{AnswerMode, ScriptedPolicy};
use agl_core::par;
use agl_core::retrieval::compute_pagerank;
use agl_core::reward::{score_batch, ScoreRequest};
use agl_core::{Environment, RolloutRecord, Split, Stage, Target, Task};
use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Subcommand};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::config::EngineConfig;
use crate::data::DataArgs;
use crate::service::{Defaults, Service};
use crate::wire::reward_json;

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Validate the graph and write salience, norm and embedding caches.
    Index(IndexArgs),
    /// Score difficulty and emit a staged curriculum plan as JSON lines.
    Curriculum(CurriculumArgs),
    /// Run scripted-policy rollouts and write trajectories as JSON lines.
    Rollout(RolloutArgs),
    /// Score a JSON-lines trajectory file.
    Score(ScoreArgs),
    /// Run the environment service over TCP or standard streams.
    Serve(ServeArgs),
}

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Index(a) => index(&a),
        Command::Curriculum(a) => curriculum(&a),
        Command::Rollout(a) => rollout(&a).map(|_| ()),
        Command::Score(a) => score(&a).map(|_| ()),
        Command::Serve(a) => serve(&a),
    }
}

fn writer(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(io::BufWriter::new(
            fs::File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(io::BufWriter::new(io::stdout().lock())),
    })
}

#[derive(Args, Debug)]
pub struct IndexArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Output directory for the caches.
    #[arg(long, default_value = "index")]
    pub out: PathBuf,
}

pub fn index(a: &IndexArgs) -> Result<()> {
    let cfg = a.data.engine_config()?;
    let graph = a.data.load_graph()?;
    let emb = a.data.load_embeddings(&graph)?;
    let sal = compute_pagerank(&graph, cfg.pagerank)?;
    if !sal.converged {
        log::warn!(
            "pagerank stopped after {} iterations, residual {:e}",
            sal.iterations_used,
            sal.residual
        );
    }
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    sal.write(a.out.join("salience.json"))?;
    fs::write(
        a.out.join("norms.json"),
        serde_json::to_string(emb.norms())?,
    )?;
    emb.write(a.out.join("embeddings.bin"))?;
    println!(
        "{}",
        json!({
            "nodes": graph.node_count(),
            "edges": graph.edge_count(),
            "dims": emb.dims(),
            "pagerank_iterations": sal.iterations_used,
            "pagerank_converged": sal.converged,
            "out": a.out.display().to_string(),
        })
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct CurriculumArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value = "nc")]
    pub task: Task,
    /// Per-stage easy,medium,hard quotas separated by ';'. Defaults to the
    /// benchmark quotas.
    #[arg(long)]
    pub quotas: Option<String>,
    #[arg(long, default_value_t = DEFAULT_Z)]
    pub z: f64,
    #[arg(long, default_value_t = DEFAULT_ETA)]
    pub eta: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn parse_quotas(s: &str) -> Result<Vec<StageQuota>> {
    s.split(';')
        .map(|stage| {
            let v: Vec<usize> = stage
                .split(',')
                .map(|x| x.trim().parse::<usize>())
                .collect::<Result<_, _>>()
                .with_context(|| format!("bad quota {stage:?}"))?;
            match v[..] {
                [e, m, h] => Ok(StageQuota::new(e, m, h)),
                _ => bail!("quota {stage:?} needs three numbers"),
            }
        })
        .collect()
}

pub fn curriculum(a: &CurriculumArgs) -> Result<()> {
    let env = a.data.load()?;
    let scores = match a.task {
        Task::Nc => {
            let nodes: Vec<_> = env
                .graph
                .nodes_in_split(Split::Train)
                .filter(|&v| env.graph.label(v).is_some())
                .collect();
            score_nc(&env.graph, &nodes, a.z, a.eta)?
        }
        Task::Lp => {
            let pool = env
                .pool
                .as_ref()
                .ok_or_else(|| anyhow!("lp curriculum needs --pairs"))?;
            score_lp(pool.entries(), &env.embeddings)
        }
    };
    let quotas = match &a.quotas {
        Some(q) => parse_quotas(q)?,
        None => StageQuota::defaults(),
    };
    let plan = stratify(scores, &quotas, a.data.seed)?;
    let mut w = writer(a.out.as_deref())?;
    w.write_all(plan.to_jsonl().as_bytes())?;
    w.flush()?;
    Ok(())
}

#[derive(Args, Debug)]
pub struct RolloutArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// all-tools, answer-now or stop-after-N.
    #[arg(long, default_value = "all-tools")]
    pub policy: String,
    #[arg(long, default_value = "nc")]
    pub task: Task,
    #[arg(long, default_value = "1")]
    pub stage: Stage,
    #[arg(long, default_value_t = agl_core::env::DEFAULT_BUDGET)]
    pub budget: usize,
    #[arg(long)]
    pub lambda_r: Option<f64>,
    #[arg(long)]
    pub template: Option<String>,
    #[arg(long, default_value_t = 100)]
    pub count: usize,
    /// Answer with a seeded random label instead of the gold label.
    #[arg(long)]
    pub answer_seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutSummary {
    pub rollouts: usize,
    pub mean_search: f64,
    pub accuracy: f64,
    pub mean_reward: f64,
}

fn rollout_targets(env: &Environment, task: Task, count: usize, seed: u64) -> Result<Vec<Target>> {
    let mut all: Vec<Target> = match task {
        Task::Nc => {
            let labeled = |v: &u32| env.graph.label(*v).is_some();
            let mut nodes: Vec<u32> = env
                .graph
                .nodes_in_split(Split::Test)
                .filter(labeled)
                .collect();
            if nodes.is_empty() {
                nodes = (0..env.graph.node_count() as u32).filter(labeled).collect();
            }
            nodes
                .into_iter()
                .map(|v| Target::node(v).with_gold(env.graph.label(v).unwrap_or_default()))
                .collect()
        }
        Task::Lp => {
            let pool = env
                .pool
                .as_ref()
                .ok_or_else(|| anyhow!("lp rollouts need --pairs"))?;
            pool.entries()
                .iter()
                .map(|p| Target::pair(p.u, p.v).with_gold(if p.label == 1 { "yes" } else { "no" }))
                .collect()
        }
    };
    if all.is_empty() {
        bail!("no labeled targets to roll out");
    }
    all.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok((0..count).map(|i| all[i % all.len()].clone()).collect())
}

/// Runs the rollouts; records come back in target order.
pub fn run_rollouts(
    env: &Environment,
    cfg: &EngineConfig,
    a: &RolloutArgs,
) -> Result<Vec<RolloutRecord>> {
    let policy = ScriptedPolicy::by_name(&a.policy)
        .ok_or_else(|| anyhow!("unknown policy {:?}", a.policy))?;
    let policy = match a.answer_seed {
        Some(s) => policy.answering(AnswerMode::Seeded(s)),
        None => policy,
    };
    let mut scfg = agl_core::SessionConfig::for_task(a.task);
    scfg.stage = a.stage;
    scfg.budget = a.budget;
    scfg.reward = cfg.reward;
    scfg.tool_config = cfg.tool_config(a.task);
    if let Some(l) = a.lambda_r {
        scfg.tool_config.lambda_r = l;
    }
    if let Some(t) = &a.template {
        scfg.template = t.clone();
    }
    let targets = rollout_targets(env, a.task, a.count, a.data.seed)?;
    let indexed: Vec<(usize, Target)> = targets.into_iter().enumerate().collect();
    par::map(&indexed, |(i, t)| -> Result<RolloutRecord> {
        let (mut s, _) = env.create_session(format!("r{i}"), scfg.clone(), t.clone())?;
        let mut p = policy.clone();
        Ok(env.run_rollout(&mut s, &mut p)?)
    })
    .into_iter()
    .collect()
}

pub fn summarize(records: &[RolloutRecord]) -> RolloutSummary {
    let n = records.len().max(1) as f64;
    RolloutSummary {
        rollouts: records.len(),
        mean_search: records.iter().map(|r| r.searches as f64).sum::<f64>() / n,
        accuracy: records
            .iter()
            .filter(|r| r.reward.as_ref().is_some_and(|x| x.correct))
            .count() as f64
            / n,
        mean_reward: records
            .iter()
            .filter_map(|r| r.reward.as_ref())
            .map(|x| x.total)
            .sum::<f64>()
            / n,
    }
}

pub fn rollout(a: &RolloutArgs) -> Result<RolloutSummary> {
    let cfg = a.data.engine_config()?;
    let env = a.data.load()?;
    let records = run_rollouts(&env, &cfg, a)?;
    let mut w = writer(a.out.as_deref())?;
    if a.out.is_some() {
        for r in &records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
    }
    let s = summarize(&records);
    let line = format!(
        "rollouts: {}  mean #Search: {:.2}  accuracy: {:.4}  mean reward: {:.4}",
        s.rollouts, s.mean_search, s.accuracy, s.mean_reward
    );
    if a.out.is_some() {
        println!("{line}");
    } else {
        writeln!(w, "{line}")?;
        w.flush()?;
    }
    Ok(s)
}

#[derive(Args, Debug)]
pub struct ScoreArgs {
    /// JSON lines with "response" and "gold" (or a "target" carrying gold).
    pub file: PathBuf,
    /// Overrides each line's stage.
    #[arg(long)]
    pub stage: Option<Stage>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSummary {
    pub count: usize,
    pub accuracy: f64,
    pub mean_search: f64,
    pub mean_total: f64,
    /// Lines whose `expected_total` differs from the computed total.
    pub mismatches: usize,
}

fn score_request(v: &Value, stage: Option<Stage>, line: usize) -> Result<ScoreRequest> {
    let response = v["response"]
        .as_str()
        .ok_or_else(|| anyhow!("line {line}: missing \"response\""))?
        .to_string();
    let gold = v["gold"]
        .as_str()
        .or_else(|| v["target"]["gold"].as_str())
        .ok_or_else(|| anyhow!("line {line}: missing \"gold\""))?
        .to_string();
    let stage = match stage {
        Some(s) => s,
        None => match &v["stage"] {
            Value::Null => Stage::Bootstrap,
            s => serde_json::from_value(s.clone())
                .with_context(|| format!("line {line}: bad stage"))?,
        },
    };
    let valid_index = v["valid_index"].as_bool().unwrap_or(true);
    Ok(ScoreRequest {
        response,
        gold,
        stage,
        valid_index,
    })
}

pub fn score(a: &ScoreArgs) -> Result<ScoreSummary> {
    let cfg = match &a.config {
        Some(p) => EngineConfig::load(p)?,
        None => EngineConfig::default(),
    };
    let file = fs::File::open(&a.file).with_context(|| format!("opening {}", a.file.display()))?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let v: Value =
            serde_json::from_str(&line).with_context(|| format!("line {}: invalid JSON", i + 1))?;
        rows.push((i + 1, v));
    }
    let reqs: Vec<ScoreRequest> = rows
        .iter()
        .map(|(i, v)| score_request(v, a.stage, *i))
        .collect::<Result<_>>()?;
    let out = score_batch(&reqs, &cfg.reward);

    let mut w = writer(a.out.as_deref())?;
    let mut mismatches = 0;
    for ((line, v), b) in rows.iter().zip(&out) {
        let mut r = reward_json(b);
        r["line"] = json!(line);
        if let Some(name) = v.get("name").or_else(|| v.get("id")) {
            r["name"] = name.clone();
        }
        if let Some(exp) = v["expected_total"].as_f64() {
            let ok = (exp - b.total).abs() < 1e-9;
            mismatches += !ok as usize;
            r["expected_total"] = json!(exp);
            r["matches_expected"] = json!(ok);
        }
        writeln!(w, "{r}")?;
    }
    let n = out.len().max(1) as f64;
    let s = ScoreSummary {
        count: out.len(),
        accuracy: out.iter().filter(|b| b.correct).count() as f64 / n,
        mean_search: out.iter().map(|b| b.searches as f64).sum::<f64>() / n,
        mean_total: out.iter().map(|b| b.total).sum::<f64>() / n,
        mismatches,
    };
    writeln!(
        w,
        "{}",
        json!({"summary": {
            "count": s.count,
            "accuracy": s.accuracy,
            "mean_search": s.mean_search,
            "mean_total": s.mean_total,
            "mismatches": s.mismatches,
        }})
    )?;
    w.flush()?;
    if mismatches > 0 {
        bail!("{mismatches} line(s) differ from expected_total");
    }
    Ok(s)
}

#[derive(Args, Debug)]
pub struct ServeArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 7878, conflicts_with = "stdio")]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// Read requests from stdin and answer on stdout.
    #[arg(long)]
    pub stdio: bool,
    /// Default stage for sessions whose reset omits it.
    #[arg(long)]
    pub stage: Option<Stage>,
    #[arg(long)]
    pub budget: Option<usize>,
    #[arg(long)]
    pub lambda_r: Option<f64>,
}

pub fn serve(a: &ServeArgs) -> Result<()> {
    let cfg = a.data.engine_config()?;
    if let Some(l) = a.lambda_r {
        if !(0.0..=1.0).contains(&l) {
            bail!("--lambda-r must be in [0, 1], got {l}");
        }
    }
    let env = Arc::new(a.data.load()?);
    let svc = Arc::new(Service::new(
        env,
        cfg,
        Defaults {
            budget: a.budget,
            stage: a.stage,
            lambda_r: a.lambda_r,
        },
    ));
    svc.spawn_reaper();
    if a.stdio {
        svc.serve_io(io::stdin().lock(), io::stdout().lock())
    } else {
        svc.serve_tcp((a.host.as_str(), a.port))
    }
}
