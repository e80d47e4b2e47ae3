use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Barrier};
use std::time::{Duration, Instant};

use agl::config::EngineConfig;
use agl::service::{Defaults, Service};
use agl::wire::{reward_json, step_json};
use agl_core::protocol::retrospective_trigger;
use agl_core::reward::{score_response, RewardConfig};
use agl_core::synthetic::{environment, SyntheticSpec};
use agl_core::{Environment, SessionConfig, Stage, Target, Tool};
use proptest::prelude::*;
use serde_json::{json, Value};

fn env() -> Arc<Environment> {
    Arc::new(environment(&SyntheticSpec {
        nodes: 300,
        ..Default::default()
    }))
}

fn service() -> Service {
    Service::new(env(), EngineConfig::default(), Defaults::default())
}

fn call(svc: &Service, req: Value) -> Value {
    serde_json::from_str(&svc.handle_line(&req.to_string())).unwrap()
}

fn fixtures() -> Vec<Value> {
    let text = std::fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../../fixtures/rewards.jsonl"
    ))
    .unwrap();
    text.lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn reset_returns_prompt() {
    let svc = service();
    let r = call(
        &svc,
        json!({"cmd":"reset","payload":{"target":{"u":5},"task":"nc","stage":1}}),
    );
    assert_eq!(r["ok"], true);
    assert!(r["session"].as_str().is_some());
    assert!(r["observation"]
        .as_str()
        .unwrap()
        .contains("GRAPH SEARCH POOLS"));
}

#[test]
fn unknown_and_malformed() {
    let svc = service();
    assert_eq!(
        call(&svc, json!({"cmd":"nope"})),
        json!({"ok":false,"error":"unknown cmd"})
    );
    let r: Value = serde_json::from_str(&svc.handle_line("{not json")).unwrap();
    assert_eq!(r["ok"], false);
    assert!(r["error"]
        .as_str()
        .unwrap()
        .starts_with("malformed request"));
    let r = call(
        &svc,
        json!({"cmd":"step","session":"missing","payload":{"text":"x"}}),
    );
    assert_eq!(r["ok"], false);
    let r = call(
        &svc,
        json!({"cmd":"reset","payload":{"target":{"u":100000}}}),
    );
    assert_eq!(r["ok"], false);
    let r = call(
        &svc,
        json!({"cmd":"reset","payload":{"target":{"u":1},"task":"lp"}}),
    );
    assert_eq!(r["ok"], false);
}

#[test]
fn stage_two_step_carries_trigger_and_terminal_drops_session() {
    let svc = service();
    let r = call(
        &svc,
        json!({"cmd":"reset","payload":{"target":{"u":3},"stage":2}}),
    );
    let id = r["session"].as_str().unwrap().to_string();
    let text = "<think>\nlook around\n<|begin_of_query|>1-hop:neighbors<|end_of_query|>";
    let r = call(
        &svc,
        json!({"cmd":"step","session":id,"payload":{"text":text}}),
    );
    assert_eq!(r["ok"], true);
    assert_eq!(r["executed"], "1-hop");
    assert_eq!(r["session"], id.as_str());
    let obs = r["observation"].as_str().unwrap();
    assert!(obs.contains(&retrospective_trigger(Tool::OneHop)));
    assert!(obs.contains("Let me first carefully review"));

    let stats = call(&svc, json!({"cmd":"stats"}));
    assert_eq!(stats["stats"]["active_sessions"], 1);
    let r = call(
        &svc,
        json!({"cmd":"step","session":id,"payload":{"text":"\nok\n</think>\n<answer>topic-0</answer>"}}),
    );
    assert_eq!(r["terminal"], true);
    assert_eq!(r["termination"], "answer");
    assert!(r["reward"]["total"].is_number());
    let stats = call(&svc, json!({"cmd":"stats"}));
    assert_eq!(stats["stats"]["active_sessions"], 0);
    assert_eq!(
        call(
            &svc,
            json!({"cmd":"step","session":id,"payload":{"text":"x"}})
        )["ok"],
        false
    );
}

#[test]
fn scoring_matches_in_process_exactly() {
    let svc = service();
    let cfg = RewardConfig::default();
    let mut items = Vec::new();
    for f in fixtures() {
        let stage: Stage = serde_json::from_value(f["stage"].clone()).unwrap();
        let want = score_response(
            f["response"].as_str().unwrap(),
            f["gold"].as_str().unwrap(),
            stage,
            f["valid_index"].as_bool().unwrap(),
            &cfg,
        );
        let payload = json!({
            "response": f["response"], "gold": f["gold"], "stage": f["stage"], "valid_index": f["valid_index"],
        });
        let r = call(&svc, json!({"cmd":"score","payload":payload}));
        assert_eq!(r["reward"], reward_json(&want), "{}", f["name"]);
        assert_eq!(
            r["reward"]["total"].as_f64().unwrap().to_bits(),
            want.total.to_bits()
        );
        assert_eq!(
            r["reward"]["total"].as_f64().unwrap(),
            f["expected_total"].as_f64().unwrap()
        );
        items.push(payload);
    }
    let r = call(&svc, json!({"cmd":"score","payload":{"items":items}}));
    let totals: Vec<f64> = r["rewards"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x["total"].as_f64().unwrap())
        .collect();
    let want: Vec<f64> = fixtures()
        .iter()
        .map(|f| f["expected_total"].as_f64().unwrap())
        .collect();
    assert_eq!(totals, want);
    let r = call(&svc, json!({"cmd":"score","payload":{"items":[]}}));
    assert_eq!(r["rewards"], json!([]));
}

#[test]
fn idle_sessions_are_reaped() {
    let svc = service();
    call(&svc, json!({"cmd":"reset","payload":{"target":{"u":1}}}));
    assert_eq!(svc.reap(Instant::now(), Duration::from_secs(300)), 0);
    assert_eq!(
        svc.reap(
            Instant::now() + Duration::from_secs(301),
            Duration::from_secs(300)
        ),
        1
    );
    assert_eq!(svc.active_sessions(), 0);
}

#[test]
fn tcp_round_trip() {
    let svc = Arc::new(service());
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let s = Arc::clone(&svc);
    std::thread::spawn(move || s.accept_loop(listener));
    let mut stream = TcpStream::connect(addr).unwrap();
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    for line in ["{\"cmd\":\"nope\"}", "garbage", "{\"cmd\":\"stats\"}"] {
        writeln!(stream, "{line}").unwrap();
    }
    let mut lines = Vec::new();
    for _ in 0..3 {
        let mut l = String::new();
        reader.read_line(&mut l).unwrap();
        lines.push(serde_json::from_str::<Value>(&l).unwrap());
    }
    assert_eq!(lines[0]["error"], "unknown cmd");
    assert_eq!(lines[1]["ok"], false);
    assert_eq!(lines[2]["ok"], true);
}

const TOOLS: [&str; 4] = ["1-hop", "2-hop", "pagerank", "similar"];

/// Turn texts for one tagged session.
fn script(tag: usize, tools: &[usize]) -> Vec<String> {
    let mut out = Vec::new();
    for (r, &t) in tools.iter().enumerate() {
        let open = if r == 0 { "<think>\n" } else { "\n" };
        out.push(format!(
            "{open}session {tag} round {r}\n<|begin_of_query|>{}:tag{tag} topic-{} words<|end_of_query|>",
            TOOLS[t],
            tag % 4
        ));
    }
    out.push(format!(
        "\nfinal {tag}\n</think>\n<answer>topic-{}</answer>",
        tag % 4
    ));
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn concurrent_sessions_do_not_cross_contaminate(
        plans in prop::collection::vec((prop::collection::vec(0usize..4, 0..6), 1u8..=2, 0u32..300), 64..=72)
    ) {
        let env = env();
        let svc = Service::new(Arc::clone(&env), EngineConfig::default(), Defaults::default());
        let barrier = Barrier::new(plans.len());
        let results: Vec<Result<(), String>> = std::thread::scope(|s| {
            let handles: Vec<_> = plans
                .iter()
                .enumerate()
                .map(|(tag, (tools, stage, node))| {
                    let (svc, env, barrier) = (&svc, &env, &barrier);
                    s.spawn(move || -> Result<(), String> {
                        let stage = Stage::from_number(*stage as u64).unwrap();
                        let cfg = SessionConfig { stage, ..Default::default() };
                        let target = Target::node(*node).with_gold(env.graph.label(*node).unwrap_or("none"));
                        let (mut local, prompt) = env.create_session("local", cfg, target).unwrap();
                        let r = call(svc, json!({"cmd":"reset","payload":{
                            "target":{"u":node,"gold":local.target.gold},"stage":stage.number()}}));
                        if r["observation"] != prompt.as_str() {
                            return Err(format!("session {tag}: prompt differs"));
                        }
                        let id = r["session"].as_str().unwrap().to_string();
                        barrier.wait();
                        for text in script(tag, tools) {
                            let want = env.step(&mut local, &text).unwrap();
                            let got = call(svc, json!({"cmd":"step","session":id,"payload":{"text":text}}));
                            let mut want_json = step_json(&want);
                            want_json.insert("ok".into(), Value::Bool(true));
                            want_json.insert("session".into(), Value::String(id.clone()));
                            if got != Value::Object(want_json) {
                                return Err(format!("session {tag}: step differs\n{got}"));
                            }
                            if want.terminal {
                                break;
                            }
                            std::thread::yield_now();
                        }
                        Ok(())
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        for r in results {
            prop_assert!(r.is_ok(), "{}", r.unwrap_err());
        }
        prop_assert_eq!(svc.active_sessions(), 0);
    }
}
