//! JSON shapes shared by the service and the CLI.

use agl_core::env::StepOutcome;
use agl_core::reward::RewardBreakdown;
use serde::Deserialize;
use serde_json::{json, Map, Value};

/// One request line: `{"cmd", "session"?, "payload"?}`.
#[derive(Debug, Clone, Deserialize)]
pub struct WireRequest {
    pub cmd: String,
    #[serde(default)]
    pub session: Option<String>,
    #[serde(default)]
    pub payload: Value,
}

pub fn reward_json(b: &RewardBreakdown) -> Value {
    json!({
        "total": b.total,
        "terms": {
            "format": b.r_fmt,
            "accuracy": b.r_acc,
            "coverage": b.r_cov,
            "depth": b.r_depth,
        },
        "stage": b.stage,
        "n_short": b.n_short,
        "searches": b.searches,
        "tools_used": b.tools_used.iter().map(|t| t.wire_name()).collect::<Vec<_>>(),
        "prediction": b.prediction,
        "correct": b.correct,
    })
}

pub fn step_json(out: &StepOutcome) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("observation".into(), Value::String(out.observation.clone()));
    m.insert("terminal".into(), Value::Bool(out.terminal));
    m.insert("searches_used".into(), json!(out.searches_used));
    m.insert(
        "executed".into(),
        json!(out.executed.map(|t| t.wire_name())),
    );
    if out.terminal {
        m.insert("answer".into(), json!(out.answer));
        m.insert("termination".into(), json!(out.termination));
        if let Some(r) = &out.reward {
            m.insert("reward".into(), reward_json(r));
        }
    }
    m
}

pub fn ok(session: Option<&str>, body: Map<String, Value>) -> Value {
    let mut m = Map::new();
    m.insert("ok".into(), Value::Bool(true));
    if let Some(s) = session {
        m.insert("session".into(), Value::String(s.to_string()));
    }
    m.extend(body);
    Value::Object(m)
}

pub fn err(session: Option<&str>, msg: impl Into<String>) -> Value {
    let mut m = Map::new();
    m.insert("ok".into(), Value::Bool(false));
    if let Some(s) = session {
        m.insert("session".into(), Value::String(s.to_string()));
    }
    m.insert("error".into(), Value::String(msg.into()));
    Value::Object(m)
}
