//! Text-in, text-out policies. The scripted ones drive tests, benchmarks and
//! the `rollout` command.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Session;
use crate::protocol::{
    Action, ANSWER_CLOSE, ANSWER_OPEN, DOCS_BEGIN, DOCS_END, QUERY_BEGIN, QUERY_END, THINK_CLOSE,
    THINK_OPEN,
};
use crate::tools::Tool;

pub struct PolicyContext<'a> {
    pub session: &'a Session,
    pub round: usize,
}

pub trait Policy {
    fn act(&mut self, ctx: &PolicyContext<'_>) -> String;
}

impl<F: FnMut(&PolicyContext<'_>) -> String> Policy for F {
    fn act(&mut self, ctx: &PolicyContext<'_>) -> String {
        self(ctx)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnswerMode {
    /// The target's gold label, or the first label when there is none.
    Gold,
    /// A label drawn from the label space, seeded per target.
    Seeded(u64),
}

/// Issues a fixed tool sequence, one per round, then answers. Stops early
/// when the budget is spent.
#[derive(Debug, Clone)]
pub struct ScriptedPolicy {
    pub tools: Vec<Tool>,
    /// Whitespace tokens of reasoning written after each documents block.
    pub reasoning_tokens: usize,
    pub answer: AnswerMode,
}

const FILLER: [&str; 8] = [
    "the",
    "retrieved",
    "evidence",
    "suggests",
    "a",
    "consistent",
    "topical",
    "signal",
];

impl ScriptedPolicy {
    pub fn new(tools: Vec<Tool>) -> Self {
        ScriptedPolicy {
            tools,
            reasoning_tokens: 8,
            answer: AnswerMode::Gold,
        }
    }

    pub fn all_tools() -> Self {
        Self::new(Tool::ALL.to_vec())
    }

    pub fn answer_now() -> Self {
        Self::new(Vec::new())
    }

    /// `n` searches cycling through the tools in order.
    pub fn stop_after(n: usize) -> Self {
        Self::new(Tool::ALL.iter().copied().cycle().take(n).collect())
    }

    pub fn with_reasoning(mut self, tokens: usize) -> Self {
        self.reasoning_tokens = tokens;
        self
    }

    pub fn answering(mut self, mode: AnswerMode) -> Self {
        self.answer = mode;
        self
    }

    /// Parses `all-tools`, `answer-now` or `stop-after-N`.
    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "all-tools" => Some(Self::all_tools()),
            "answer-now" => Some(Self::answer_now()),
            _ => name
                .strip_prefix("stop-after-")
                .and_then(|n| n.parse().ok())
                .map(Self::stop_after),
        }
    }

    fn label(&self, s: &Session) -> String {
        match self.answer {
            AnswerMode::Gold => s
                .target
                .gold
                .clone()
                .unwrap_or_else(|| s.label_space[0].clone()),
            AnswerMode::Seeded(seed) => {
                let mix = seed ^ ((s.target.u as u64) << 32 | s.target.v as u64);
                let mut rng = ChaCha8Rng::seed_from_u64(mix);
                s.label_space
                    .choose(&mut rng)
                    .expect("label space is nonempty")
                    .clone()
            }
        }
    }

    fn reasoning(&self, round: usize) -> String {
        if round == 0 {
            return "Start from the anchor description and plan the first search.".into();
        }
        (0..self.reasoning_tokens)
            .map(|i| FILLER[(i + round) % FILLER.len()])
            .collect::<Vec<_>>()
            .join(" ")
    }
}

impl Policy for ScriptedPolicy {
    fn act(&mut self, ctx: &PolicyContext<'_>) -> String {
        let s = ctx.session;
        let r = ctx.round;
        let open = if r == 0 {
            format!("{THINK_OPEN}\n")
        } else {
            "\n".into()
        };
        let body = self.reasoning(r);
        if r < self.tools.len() && s.searches_used < s.config.budget {
            let action = Action::new(self.tools[r], format!("evidence for round {}", r + 1));
            format!("{open}{body}\n{}", action.render())
        } else {
            format!(
                "{open}{body}\n{THINK_CLOSE}\n{ANSWER_OPEN}{}{ANSWER_CLOSE}",
                self.label(s)
            )
        }
    }
}

/// Emits random mixtures of protocol tags, tool prefixes and words.
#[derive(Debug, Clone)]
pub struct FuzzPolicy {
    rng: ChaCha8Rng,
}

impl FuzzPolicy {
    pub fn new(seed: u64) -> Self {
        FuzzPolicy {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

const FUZZ_PIECES: [&str; 20] = [
    THINK_OPEN,
    THINK_CLOSE,
    QUERY_BEGIN,
    QUERY_END,
    DOCS_BEGIN,
    DOCS_END,
    ANSWER_OPEN,
    ANSWER_CLOSE,
    "1-hop:",
    "2-hop:",
    "pagerank:",
    "similar:",
    "3-hop:",
    ":",
    "word",
    " ",
    "\n",
    "é",
    "<",
    "|>",
];

impl Policy for FuzzPolicy {
    fn act(&mut self, _ctx: &PolicyContext<'_>) -> String {
        let rng = &mut self.rng;
        let mut out = String::new();
        match rng.gen_range(0..4) {
            0 => {}
            1 => {
                let tool = *Tool::ALL.choose(rng).unwrap();
                out.push_str(THINK_OPEN);
                out.push_str(&Action::new(tool, "q").render());
            }
            _ => {
                if rng.gen_bool(0.6) {
                    out.push_str(THINK_OPEN);
                }
                for _ in 0..rng.gen_range(0..12) {
                    out.push_str(FUZZ_PIECES.choose(rng).unwrap());
                }
            }
        }
        out
    }
}
