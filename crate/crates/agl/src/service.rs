//! Newline-delimited JSON environment and reward service.
//!
//! Each request line gets exactly one response line. Sessions live in a
//! concurrent table; a session's own mutex serializes its steps, so distinct
//! ids never wait on each other.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use agl_core::reward::{score_batch, ScoreRequest};
use agl_core::{Environment, Session, SessionConfig, Stage, Target, Task};
use anyhow::Result;
use dashmap::DashMap;
use serde::Deserialize;
use serde_json::{json, Map, Value};

use crate::config::EngineConfig;
use crate::wire::{err, ok, reward_json, step_json, WireRequest};

/// Per-process defaults applied to `reset` requests that leave fields out.
#[derive(Debug, Clone, Default)]
pub struct Defaults {
    pub budget: Option<usize>,
    pub stage: Option<Stage>,
    pub lambda_r: Option<f64>,
}

struct Entry {
    session: Session,
    last_used: Instant,
}

#[derive(Default)]
struct Counters {
    created: AtomicU64,
    steps: AtomicU64,
    finished: AtomicU64,
    scored: AtomicU64,
    reaped: AtomicU64,
    errors: AtomicU64,
}

pub struct Service {
    env: Arc<Environment>,
    cfg: EngineConfig,
    defaults: Defaults,
    sessions: DashMap<String, Arc<Mutex<Entry>>>,
    epoch: u64,
    next_id: AtomicU64,
    counters: Counters,
    started: Instant,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TargetPayload {
    u: u32,
    #[serde(default)]
    v: Option<u32>,
    #[serde(default)]
    gold: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ResetPayload {
    target: TargetPayload,
    #[serde(default)]
    task: Option<Task>,
    #[serde(default)]
    stage: Option<Stage>,
    #[serde(default)]
    budget: Option<usize>,
    #[serde(default)]
    template: Option<String>,
    #[serde(default)]
    label_space: Option<Vec<String>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct StepPayload {
    text: String,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum ScorePayload {
    Batch { items: Vec<ScoreRequest> },
    One(ScoreRequest),
}

impl Service {
    pub fn new(env: Arc<Environment>, cfg: EngineConfig, defaults: Defaults) -> Self {
        let epoch = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Service {
            env,
            cfg,
            defaults,
            sessions: DashMap::new(),
            epoch,
            next_id: AtomicU64::new(0),
            counters: Counters::default(),
            started: Instant::now(),
        }
    }

    pub fn environment(&self) -> &Environment {
        &self.env
    }

    pub fn active_sessions(&self) -> usize {
        self.sessions.len()
    }

    /// Session settings for a `reset`, before payload overrides.
    pub fn session_config(&self, task: Task) -> SessionConfig {
        let mut c = SessionConfig::for_task(task);
        c.reward = self.cfg.reward;
        c.tool_config = self.cfg.tool_config(task);
        if let Some(l) = self.defaults.lambda_r {
            c.tool_config.lambda_r = l;
        }
        if let Some(b) = self.defaults.budget {
            c.budget = b;
        }
        if let Some(s) = self.defaults.stage {
            c.stage = s;
        }
        c
    }

    pub fn handle_line(&self, line: &str) -> String {
        let resp = match serde_json::from_str::<WireRequest>(line) {
            Ok(req) => self.handle(req),
            Err(e) => err(None, format!("malformed request: {e}")),
        };
        if resp["ok"] == Value::Bool(false) {
            self.counters.errors.fetch_add(1, Ordering::Relaxed);
        }
        resp.to_string()
    }

    pub fn handle(&self, req: WireRequest) -> Value {
        let sid = req.session.as_deref();
        let out = match req.cmd.as_str() {
            "reset" => self.reset(req.payload),
            "step" => match sid {
                Some(id) => self.step(id, req.payload),
                None => Err("step requires a session id".into()),
            },
            "score" => self.score(req.payload),
            "stats" => Ok(self.stats()),
            _ => return err(sid, "unknown cmd"),
        };
        match out {
            Ok((id, body)) => ok(id.as_deref().or(sid), body),
            Err(e) => err(sid, e),
        }
    }

    fn reset(&self, payload: Value) -> Result<(Option<String>, Map<String, Value>), String> {
        let p: ResetPayload =
            serde_json::from_value(payload).map_err(|e| format!("bad reset payload: {e}"))?;
        let task = p.task.unwrap_or(Task::Nc);
        let mut cfg = self.session_config(task);
        if let Some(s) = p.stage {
            cfg.stage = s;
        }
        if let Some(b) = p.budget {
            cfg.budget = b;
        }
        if let Some(t) = p.template {
            cfg.template = t;
        }
        if let Some(l) = p.label_space {
            cfg.label_space = l;
        }
        let mut target = match (task, p.target.v) {
            (Task::Nc, None) => Target::node(p.target.u),
            (Task::Nc, Some(v)) if v == p.target.u => Target::node(p.target.u),
            (Task::Nc, Some(_)) => return Err("nc targets take a single node".into()),
            (Task::Lp, Some(v)) => Target::pair(p.target.u, v),
            (Task::Lp, None) => return Err("lp targets need both u and v".into()),
        };
        target.gold = match p.target.gold {
            Some(g) => Some(g),
            None if task == Task::Nc && (target.u as usize) < self.env.graph.node_count() => {
                self.env.graph.label(target.u).map(str::to_string)
            }
            None => None,
        };
        let n = self.next_id.fetch_add(1, Ordering::Relaxed);
        let id = format!("{:x}-{n}", self.epoch);
        let (session, prompt) = self
            .env
            .create_session(id.clone(), cfg, target)
            .map_err(|e| e.to_string())?;
        self.sessions.insert(
            id.clone(),
            Arc::new(Mutex::new(Entry {
                session,
                last_used: Instant::now(),
            })),
        );
        self.counters.created.fetch_add(1, Ordering::Relaxed);
        let mut body = Map::new();
        body.insert("observation".into(), Value::String(prompt));
        Ok((Some(id), body))
    }

    fn step(
        &self,
        id: &str,
        payload: Value,
    ) -> Result<(Option<String>, Map<String, Value>), String> {
        let p: StepPayload =
            serde_json::from_value(payload).map_err(|e| format!("bad step payload: {e}"))?;
        let entry = self
            .sessions
            .get(id)
            .map(|e| Arc::clone(e.value()))
            .ok_or_else(|| format!("unknown session {id}"))?;
        let mut guard = entry
            .lock()
            .map_err(|_| format!("session {id} is poisoned"))?;
        let out = self
            .env
            .step(&mut guard.session, &p.text)
            .map_err(|e| e.to_string())?;
        guard.last_used = Instant::now();
        self.counters.steps.fetch_add(1, Ordering::Relaxed);
        if out.terminal {
            drop(guard);
            self.sessions.remove(id);
            self.counters.finished.fetch_add(1, Ordering::Relaxed);
        }
        Ok((None, step_json(&out)))
    }

    fn score(&self, payload: Value) -> Result<(Option<String>, Map<String, Value>), String> {
        let p: ScorePayload =
            serde_json::from_value(payload).map_err(|e| format!("bad score payload: {e}"))?;
        let mut body = Map::new();
        match p {
            ScorePayload::One(r) => {
                let b = score_batch(std::slice::from_ref(&r), &self.cfg.reward);
                body.insert("reward".into(), reward_json(&b[0]));
                self.counters.scored.fetch_add(1, Ordering::Relaxed);
            }
            ScorePayload::Batch { items } => {
                let b = score_batch(&items, &self.cfg.reward);
                body.insert(
                    "rewards".into(),
                    Value::Array(b.iter().map(reward_json).collect()),
                );
                self.counters
                    .scored
                    .fetch_add(items.len() as u64, Ordering::Relaxed);
            }
        }
        Ok((None, body))
    }

    fn stats(&self) -> (Option<String>, Map<String, Value>) {
        let c = &self.counters;
        let mut body = Map::new();
        body.insert(
            "stats".into(),
            json!({
                "active_sessions": self.sessions.len(),
                "created": c.created.load(Ordering::Relaxed),
                "steps": c.steps.load(Ordering::Relaxed),
                "finished": c.finished.load(Ordering::Relaxed),
                "scored": c.scored.load(Ordering::Relaxed),
                "reaped": c.reaped.load(Ordering::Relaxed),
                "errors": c.errors.load(Ordering::Relaxed),
                "uptime_secs": self.started.elapsed().as_secs(),
                "nodes": self.env.graph.node_count(),
                "edges": self.env.graph.edge_count(),
            }),
        );
        (None, body)
    }

    /// Drops sessions idle for longer than `timeout` as of `now`.
    pub fn reap(&self, now: Instant, timeout: Duration) -> usize {
        let before = self.sessions.len();
        self.sessions.retain(|_, e| match e.try_lock() {
            Ok(g) => now.saturating_duration_since(g.last_used) < timeout,
            Err(_) => true,
        });
        let n = before.saturating_sub(self.sessions.len());
        if n > 0 {
            log::info!("reaped {n} idle sessions");
            self.counters.reaped.fetch_add(n as u64, Ordering::Relaxed);
        }
        n
    }

    pub fn spawn_reaper(self: &Arc<Self>) -> thread::JoinHandle<()> {
        let timeout = Duration::from_secs(self.cfg.service.idle_timeout_secs);
        let every = (timeout / 4).clamp(Duration::from_millis(100), Duration::from_secs(30));
        let svc = Arc::clone(self);
        thread::spawn(move || loop {
            thread::sleep(every);
            svc.reap(Instant::now(), timeout);
        })
    }

    /// Serves one stream until EOF.
    pub fn serve_io(&self, reader: impl BufRead, writer: impl Write) -> Result<()> {
        let mut w = BufWriter::new(writer);
        for line in reader.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            writeln!(w, "{}", self.handle_line(&line))?;
            w.flush()?;
        }
        Ok(())
    }

    pub fn serve_tcp(self: Arc<Self>, addr: impl ToSocketAddrs) -> Result<()> {
        let listener = TcpListener::bind(addr)?;
        log::info!("listening on {}", listener.local_addr()?);
        self.accept_loop(listener)
    }

    pub fn accept_loop(self: Arc<Self>, listener: TcpListener) -> Result<()> {
        for conn in listener.incoming() {
            let stream = match conn {
                Ok(s) => s,
                Err(e) => {
                    log::warn!("accept failed: {e}");
                    continue;
                }
            };
            let svc = Arc::clone(&self);
            thread::spawn(move || {
                if let Err(e) = svc.serve_stream(stream) {
                    log::debug!("connection closed: {e}");
                }
            });
        }
        Ok(())
    }

    fn serve_stream(&self, stream: TcpStream) -> Result<()> {
        let reader = BufReader::new(stream.try_clone()?);
        self.serve_io(reader, stream)
    }
}
