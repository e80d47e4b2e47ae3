//! A 50-trajectory corpus of valid responses: scripted rollouts over a
//! synthetic graph plus hand-written edge cases.

use agl_core::env::{AnswerMode, ScriptedPolicy, SessionConfig};
use agl_core::protocol::{
    ANSWER_CLOSE, ANSWER_OPEN, DOCS_BEGIN, DOCS_END, QUERY_BEGIN, QUERY_END, THINK_CLOSE,
    THINK_OPEN,
};
use agl_core::synthetic::{environment, SyntheticSpec};
use agl_core::{Split, Stage, Target, Task, Tool};

pub fn corpus() -> Vec<String> {
    let env = environment(&SyntheticSpec::default());
    let nodes: Vec<_> = env.graph.nodes_in_split(Split::Test).take(10).collect();
    let pairs: Vec<_> = env.pool.as_ref().unwrap().entries()[..10].to_vec();
    let mut out = Vec::new();
    for i in 0..40 {
        let task = if i % 2 == 0 { Task::Nc } else { Task::Lp };
        let target = match task {
            Task::Nc => Target::node(nodes[i % nodes.len()]),
            Task::Lp => Target::pair(pairs[i % pairs.len()].u, pairs[i % pairs.len()].v),
        };
        let cfg = SessionConfig {
            stage: if i % 3 == 0 {
                Stage::Mso
            } else {
                Stage::Bootstrap
            },
            ..SessionConfig::for_task(task)
        };
        let (mut s, _) = env.create_session(format!("c{i}"), cfg, target).unwrap();
        let mut p = ScriptedPolicy::stop_after(i % 5)
            .with_reasoning(i * 7 % 130)
            .answering(AnswerMode::Seeded(i as u64));
        env.run_rollout(&mut s, &mut p).unwrap();
        out.push(s.response());
    }
    let q = |t: Tool| format!("{QUERY_BEGIN}{}:why not{QUERY_END}", t.wire_name());
    let docs = format!("\n{DOCS_BEGIN}\n(1) x\n{DOCS_END}\n");
    out.extend([
        format!("{THINK_OPEN}short{THINK_CLOSE}{ANSWER_OPEN}a{ANSWER_CLOSE}"),
        format!(
            "{THINK_OPEN}{}{docs}{THINK_CLOSE}{ANSWER_OPEN}b{ANSWER_CLOSE}\ntrailing",
            q(Tool::OneHop)
        ),
        format!(
            "{THINK_OPEN}{} unexecuted {}{docs}{THINK_CLOSE}{ANSWER_OPEN}c{ANSWER_CLOSE}",
            q(Tool::Dense),
            q(Tool::OneHop)
        ),
        format!("{THINK_OPEN}no answer yet"),
        format!("{THINK_OPEN}{}{docs}", q(Tool::Salience)),
        format!(
            "{THINK_OPEN}unicode é ✓ {}{docs}done{THINK_CLOSE}{ANSWER_OPEN}ß{ANSWER_CLOSE}",
            q(Tool::TwoHop)
        ),
        format!(
            "{THINK_OPEN}{}{docs}{}{docs}{}{docs}{}{docs}{THINK_CLOSE}{ANSWER_OPEN}d{ANSWER_CLOSE}",
            q(Tool::OneHop),
            q(Tool::TwoHop),
            q(Tool::Salience),
            q(Tool::Dense)
        ),
        String::new(),
        format!("{ANSWER_OPEN}{ANSWER_CLOSE}"),
        format!(
            "{THINK_OPEN}{}{}{THINK_CLOSE}",
            q(Tool::OneHop),
            q(Tool::OneHop)
        ),
    ]);
    out
}
