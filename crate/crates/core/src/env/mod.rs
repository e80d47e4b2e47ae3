//! The interactive rollout environment.
//!
//! A [`Session`] holds one prompt and the turns taken so far. Each [`step`]
//! consumes one model turn: an answer ends the session, an action runs at
//! most one tool, and anything else ends the session without an answer.
//!
//! Two texts are kept per session. The *context* is the prompt followed by
//! every model turn and environment reply, exactly as the model sees it. The
//! *response* is the part that gets scored: model turns and tool documents,
//! without the prompt and without environment notices.
//!
//! [`step`]: Environment::step

mod policy;
mod template;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use policy::{AnswerMode, FuzzPolicy, Policy, PolicyContext, ScriptedPolicy};
pub use template::{parse_relations, parse_sections, TemplateError, TemplateSet, Values};

use crate::graph::{Graph, GraphError, Target, TargetKind};
use crate::protocol::{
    inside_think, parse_response, parse_trajectory, retrospective_trigger, ParseError, Trajectory,
};
use crate::retrieval::{EmbeddingIndex, PairPool, SalienceScores, TextEncoder};
use crate::reward::{score_response, RewardBreakdown, RewardConfig};
use crate::task::{Stage, Task};
use crate::tools::{render_documents, SearchContext, Tool, ToolConfig, ToolError};

pub const DEFAULT_BUDGET: usize = 4;

pub const BUDGET_EXHAUSTED_NOTICE: &str =
    "Search budget exhausted. Provide your final answer now inside <answer> tags.";

pub const OUTSIDE_THINK_NOTICE: &str =
    "Search not executed: searches must be issued inside the think block.";

/// Consecutive empty turns before a rollout is abandoned.
pub const EMPTY_TURN_LIMIT: usize = 3;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("session {0} is already terminal")]
    Terminal(String),
    #[error("target {target:?} is a {kind} target but the task is {task}")]
    TaskMismatch {
        target: Target,
        kind: TargetKind,
        task: Task,
    },
    #[error("label space is empty")]
    EmptyLabelSpace,
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Tool(#[from] ToolError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub task: Task,
    pub stage: Stage,
    pub budget: usize,
    pub tool_config: ToolConfig,
    pub template: String,
    /// Empty means: use the graph's label space (NC) or yes/no (LP).
    pub label_space: Vec<String>,
    pub reward: RewardConfig,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig::for_task(Task::Nc)
    }
}

impl SessionConfig {
    pub fn for_task(task: Task) -> Self {
        SessionConfig {
            task,
            stage: Stage::Bootstrap,
            budget: DEFAULT_BUDGET,
            tool_config: ToolConfig::for_task(task),
            template: match task {
                Task::Nc => "nc-arxiv".into(),
                Task::Lp => "lp-default".into(),
            },
            label_space: Vec::new(),
            reward: RewardConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    AwaitingModel,
    Terminal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Answer,
    /// A non-empty turn with neither an action nor an answer.
    NoAction,
    ParseError,
    /// An action after the budget notice was already given.
    BudgetOverrun,
    EmptyTurns,
    MaxTurns,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub model_text: String,
    pub observation: String,
    /// Tool documents; notices are not evidence.
    pub evidence: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Session {
    pub id: String,
    pub config: SessionConfig,
    pub target: Target,
    pub label_space: Vec<String>,
    pub prompt: String,
    pub turns: Vec<Turn>,
    pub searches_used: usize,
    pub tools_used: BTreeSet<Tool>,
    pub state: SessionState,
    pub answer: Option<String>,
    pub termination: Option<Termination>,
    pub reward: Option<RewardBreakdown>,
    budget_notified: bool,
    empty_streak: usize,
}

impl Session {
    pub fn is_terminal(&self) -> bool {
        self.state == SessionState::Terminal
    }

    /// Prompt plus every turn and reply.
    pub fn context(&self) -> String {
        let mut out = self.prompt.clone();
        for t in &self.turns {
            out.push_str(&t.model_text);
            out.push_str(&t.observation);
        }
        out
    }

    /// Model turns and tool documents: the text the reward is computed on.
    pub fn response(&self) -> String {
        let mut out = String::new();
        for t in &self.turns {
            out.push_str(&t.model_text);
            if t.evidence {
                out.push_str(&t.observation);
            }
        }
        out
    }

    pub fn trajectory(&self) -> Result<Trajectory, ParseError> {
        parse_trajectory(&self.response())
    }

    /// Turn cap: every search, one notice, one answer and a few empty turns.
    pub fn max_turns(&self) -> usize {
        self.config.budget + EMPTY_TURN_LIMIT + 2
    }

    fn finish(&mut self, how: Termination, answer: Option<String>) {
        self.state = SessionState::Terminal;
        self.termination = Some(how);
        self.answer = answer;
        if let Some(gold) = &self.target.gold {
            self.reward = Some(score_response(
                &self.response(),
                gold,
                self.config.stage,
                true,
                &self.config.reward,
            ));
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepOutcome {
    /// Text appended after the model turn; empty when terminal.
    pub observation: String,
    pub executed: Option<Tool>,
    pub searches_used: usize,
    pub terminal: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub termination: Option<Termination>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reward: Option<RewardBreakdown>,
}

/// Everything a rollout reads. Shared read-only across sessions.
pub struct Environment {
    pub graph: Graph,
    pub embeddings: EmbeddingIndex,
    pub encoder: Box<dyn TextEncoder>,
    pub salience: SalienceScores,
    pub pool: Option<PairPool>,
    pub templates: TemplateSet,
}

impl Environment {
    pub fn search_context(&self) -> SearchContext<'_> {
        SearchContext {
            graph: &self.graph,
            embeddings: &self.embeddings,
            encoder: self.encoder.as_ref(),
            salience: &self.salience,
            pool: self.pool.as_ref(),
        }
    }

    pub fn render_prompt(
        &self,
        cfg: &SessionConfig,
        target: &Target,
        labels: &[String],
    ) -> Result<String, EnvError> {
        let k = cfg.tool_config.top_k;
        let mut v = Values::default();
        v.literal("MAX_SEARCH_LIMIT", cfg.budget.to_string())
            .literal("TOPK_ONE_HOP", k.one_hop.to_string())
            .literal("TOPK_TWO_HOP", k.two_hop.to_string())
            .literal("TOPK_PAGERANK", k.salience.to_string())
            .literal("TOPK_SIMILAR", k.dense.to_string());
        match cfg.task {
            Task::Nc => {
                v.literal("SUMMARY_SNIPPET", self.graph.text(target.u))
                    .literal("CATEGORY_LIST", labels.join("\n- "));
            }
            Task::Lp => {
                v.literal("NODE_U", target.u.to_string())
                    .literal("NODE_V", target.v.to_string())
                    .literal("SUMMARY_U", self.graph.text(target.u))
                    .literal("SUMMARY_V", self.graph.text(target.v));
            }
        }
        Ok(self.templates.render(&cfg.template, &v)?)
    }

    /// Validates the target against the task and renders the initial prompt.
    pub fn create_session(
        &self,
        id: impl Into<String>,
        cfg: SessionConfig,
        target: Target,
    ) -> Result<(Session, String), EnvError> {
        target.validate(&self.graph)?;
        let want = match cfg.task {
            Task::Nc => TargetKind::Node,
            Task::Lp => TargetKind::Pair,
        };
        if target.kind != want {
            return Err(EnvError::TaskMismatch {
                kind: target.kind,
                task: cfg.task,
                target,
            });
        }
        let template_task = self.templates.task_of(&cfg.template)?;
        if template_task != cfg.task {
            return Err(TemplateError::WrongTask {
                template: cfg.template.clone(),
                task: cfg.task,
            }
            .into());
        }
        let label_space = if !cfg.label_space.is_empty() {
            cfg.label_space.clone()
        } else {
            match cfg.task {
                Task::Nc => self.graph.label_space(),
                Task::Lp => vec!["yes".into(), "no".into()],
            }
        };
        if label_space.is_empty() {
            return Err(EnvError::EmptyLabelSpace);
        }
        let prompt = self.render_prompt(&cfg, &target, &label_space)?;
        let session = Session {
            id: id.into(),
            config: cfg,
            target,
            label_space,
            prompt: prompt.clone(),
            turns: Vec::new(),
            searches_used: 0,
            tools_used: BTreeSet::new(),
            state: SessionState::AwaitingModel,
            answer: None,
            termination: None,
            reward: None,
            budget_notified: false,
            empty_streak: 0,
        };
        Ok((session, prompt))
    }

    pub fn step(&self, s: &mut Session, model_text: &str) -> Result<StepOutcome, EnvError> {
        if s.is_terminal() {
            return Err(EnvError::Terminal(s.id.clone()));
        }
        let (text, observation, executed, evidence, end) = self.advance(s, model_text)?;
        s.turns.push(Turn {
            model_text: text,
            observation: observation.clone(),
            evidence,
        });
        if let Some((how, answer)) = end {
            s.finish(how, answer);
        } else if s.turns.len() >= s.max_turns() {
            s.finish(Termination::MaxTurns, None);
        }
        Ok(StepOutcome {
            observation,
            executed,
            searches_used: s.searches_used,
            terminal: s.is_terminal(),
            termination: s.termination,
            answer: s.answer.clone(),
            reward: s.reward.clone(),
        })
    }

    #[allow(clippy::type_complexity)]
    fn advance(
        &self,
        s: &mut Session,
        model_text: &str,
    ) -> Result<
        (
            String,
            String,
            Option<Tool>,
            bool,
            Option<(Termination, Option<String>)>,
        ),
        EnvError,
    > {
        if model_text.trim().is_empty() {
            s.empty_streak += 1;
            let end =
                (s.empty_streak >= EMPTY_TURN_LIMIT).then_some((Termination::EmptyTurns, None));
            return Ok((model_text.to_string(), String::new(), None, false, end));
        }
        s.empty_streak = 0;
        let parsed = match parse_response(model_text) {
            Ok(p) => p,
            Err(e) => {
                log::debug!("session {}: unparseable turn: {e}", s.id);
                return Ok((
                    model_text.to_string(),
                    String::new(),
                    None,
                    false,
                    Some((Termination::ParseError, None)),
                ));
            }
        };
        if let Some(answer) = parsed.answer {
            let answer = crate::protocol::normalize_label(&answer);
            return Ok((
                model_text.to_string(),
                String::new(),
                None,
                false,
                Some((Termination::Answer, Some(answer))),
            ));
        }
        let Some(action) = parsed.action else {
            return Ok((
                model_text.to_string(),
                String::new(),
                None,
                false,
                Some((Termination::NoAction, None)),
            ));
        };
        let text = model_text[..parsed.consumed].to_string();

        let mut before = s.response();
        before.push_str(&parsed.reasoning);
        if !inside_think(&before) {
            return Ok((
                text,
                format!("\n{OUTSIDE_THINK_NOTICE}\n"),
                None,
                false,
                None,
            ));
        }
        if s.searches_used >= s.config.budget {
            if s.budget_notified {
                return Ok((
                    text,
                    String::new(),
                    None,
                    false,
                    Some((Termination::BudgetOverrun, None)),
                ));
            }
            s.budget_notified = true;
            return Ok((
                text,
                format!("\n{BUDGET_EXHAUSTED_NOTICE}\n"),
                None,
                false,
                None,
            ));
        }

        let evidence = self.search_context().search(
            action.tool,
            &s.target,
            &action.query,
            &s.config.tool_config,
        )?;
        let mut obs = render_documents(&evidence, s.config.task);
        if s.config.stage == Stage::Mso {
            obs.push('\n');
            obs.push_str(&retrospective_trigger(action.tool));
        }
        s.searches_used += 1;
        s.tools_used.insert(action.tool);
        Ok((text, obs, Some(action.tool), true, None))
    }

    /// Steps until terminal. The policy sees the context so far and returns
    /// the next model turn.
    pub fn run_rollout(
        &self,
        s: &mut Session,
        policy: &mut dyn Policy,
    ) -> Result<RolloutRecord, EnvError> {
        while !s.is_terminal() {
            let ctx = PolicyContext {
                session: s,
                round: s.turns.len(),
            };
            let text = policy.act(&ctx);
            self.step(s, &text)?;
        }
        Ok(RolloutRecord::from_session(s))
    }
}

/// One finished rollout, as written to trajectory files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutRecord {
    pub id: String,
    pub task: Task,
    pub stage: Stage,
    pub target: Target,
    pub budget: usize,
    pub searches: usize,
    pub tools_used: BTreeSet<Tool>,
    pub answer: Option<String>,
    pub termination: Termination,
    pub response: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reward: Option<RewardBreakdownRecord>,
}

/// Serializable subset of a reward breakdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdownRecord {
    pub total: f64,
    pub r_fmt: f64,
    pub r_acc: f64,
    pub r_cov: f64,
    pub r_depth: f64,
    pub correct: bool,
}

impl From<&RewardBreakdown> for RewardBreakdownRecord {
    fn from(b: &RewardBreakdown) -> Self {
        RewardBreakdownRecord {
            total: b.total,
            r_fmt: b.r_fmt,
            r_acc: b.r_acc,
            r_cov: b.r_cov,
            r_depth: b.r_depth,
            correct: b.correct,
        }
    }
}

impl RolloutRecord {
    pub fn from_session(s: &Session) -> Self {
        RolloutRecord {
            id: s.id.clone(),
            task: s.config.task,
            stage: s.config.stage,
            target: s.target.clone(),
            budget: s.config.budget,
            searches: s.searches_used,
            tools_used: s.tools_used.clone(),
            answer: s.answer.clone(),
            termination: s.termination.unwrap_or(Termination::MaxTurns),
            response: s.response(),
            reward: s.reward.as_ref().map(Into::into),
        }
    }
}
