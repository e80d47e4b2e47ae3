//! Reason–act–observe tag protocol: parsing model output, splitting full
//! trajectories into rounds, and the literal tag scan used for format rewards.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tools::Tool;

pub const THINK_OPEN: &str = "<think>";
pub const THINK_CLOSE: &str = "</think>";
pub const QUERY_BEGIN: &str = "<|begin_of_query|>";
pub const QUERY_END: &str = "<|end_of_query|>";
pub const DOCS_BEGIN: &str = "<|begin_of_documents|>";
pub const DOCS_END: &str = "<|end_of_documents|>";
pub const ANSWER_OPEN: &str = "<answer>";
pub const ANSWER_CLOSE: &str = "</answer>";

const TOOL_TAGS: [&str; 4] = [QUERY_BEGIN, QUERY_END, DOCS_BEGIN, DOCS_END];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("unterminated query tag at byte {at}")]
    UnterminatedQuery { at: usize },
    #[error("unterminated answer tag at byte {at}")]
    UnterminatedAnswer { at: usize },
    #[error("unterminated documents tag at byte {at}")]
    UnterminatedDocuments { at: usize },
    #[error("unexpected {tag} at byte {at}")]
    UnexpectedTag { tag: &'static str, at: usize },
    #[error("query has no tool prefix (expected e.g. \"1-hop:\")")]
    MissingToolPrefix,
    #[error("unknown tool {0:?}")]
    UnknownTool(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Action {
    pub tool: Tool,
    pub query: String,
}

impl Action {
    pub fn new(tool: Tool, query: impl Into<String>) -> Self {
        Action {
            tool,
            query: query.into(),
        }
    }

    /// The full query tag, e.g. `<|begin_of_query|>1-hop:x<|end_of_query|>`.
    pub fn render(&self) -> String {
        format!(
            "{QUERY_BEGIN}{}:{}{QUERY_END}",
            self.tool.wire_name(),
            self.query
        )
    }

    fn parse(content: &str) -> Result<Self, ParseError> {
        let (prefix, query) = content
            .split_once(':')
            .ok_or(ParseError::MissingToolPrefix)?;
        let tool =
            Tool::from_wire(prefix).ok_or_else(|| ParseError::UnknownTool(prefix.to_string()))?;
        Ok(Action::new(tool, query))
    }
}

/// One model turn, cut at the first action or answer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedResponse {
    /// Text before the query tag or answer block.
    pub reasoning: String,
    pub action: Option<Action>,
    /// Raw content of the answer block.
    pub answer: Option<String>,
    /// Byte offset where an interleaved rollout cuts the turn: just past the
    /// query end tag when there is an action, otherwise the whole input.
    pub consumed: usize,
}

fn find_from(text: &str, pat: &str, from: usize) -> Option<usize> {
    text.get(from..)?.find(pat).map(|i| i + from)
}

fn earliest(options: &[Option<usize>]) -> Option<usize> {
    options.iter().flatten().copied().min()
}

pub fn parse_response(text: &str) -> Result<ParsedResponse, ParseError> {
    let q = text.find(QUERY_BEGIN);
    let a = text.find(ANSWER_OPEN);
    let first = earliest(&[q, a]);

    if let Some(stray) = text.find(QUERY_END) {
        if q.is_none_or(|q| stray < q) && first.is_none_or(|f| stray < f) {
            return Err(ParseError::UnexpectedTag {
                tag: QUERY_END,
                at: stray,
            });
        }
    }

    match (q, a) {
        (Some(q), a) if a.is_none_or(|a| q < a) => {
            let body = q + QUERY_BEGIN.len();
            let end =
                find_from(text, QUERY_END, body).ok_or(ParseError::UnterminatedQuery { at: q })?;
            let action = Action::parse(&text[body..end])?;
            Ok(ParsedResponse {
                reasoning: text[..q].to_string(),
                action: Some(action),
                answer: None,
                consumed: end + QUERY_END.len(),
            })
        }
        (_, Some(a)) => {
            let body = a + ANSWER_OPEN.len();
            let end = find_from(text, ANSWER_CLOSE, body)
                .ok_or(ParseError::UnterminatedAnswer { at: a })?;
            Ok(ParsedResponse {
                reasoning: text[..a].to_string(),
                action: None,
                answer: Some(text[body..end].to_string()),
                consumed: text.len(),
            })
        }
        _ => {
            if let Some(at) = text.find(ANSWER_CLOSE) {
                return Err(ParseError::UnexpectedTag {
                    tag: ANSWER_CLOSE,
                    at,
                });
            }
            Ok(ParsedResponse {
                reasoning: text.to_string(),
                action: None,
                answer: None,
                consumed: text.len(),
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Round {
    pub reasoning: String,
    pub action: Option<Action>,
    /// Environment text appended after the action, when it was executed.
    pub observation: Option<String>,
}

/// A full rollout: rounds of reasoning, optional action and observation,
/// closed by an optional answer block. `render` reproduces the source bytes.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Trajectory {
    pub rounds: Vec<Round>,
    /// Raw content of the answer block.
    pub answer: Option<String>,
    /// Text after the answer block.
    pub tail: String,
}

impl Trajectory {
    pub fn render(&self) -> String {
        let mut out = String::new();
        for r in &self.rounds {
            out.push_str(&r.reasoning);
            if let Some(a) = &r.action {
                out.push_str(&a.render());
            }
            if let Some(o) = &r.observation {
                out.push_str(o);
            }
        }
        if let Some(ans) = &self.answer {
            out.push_str(ANSWER_OPEN);
            out.push_str(ans);
            out.push_str(ANSWER_CLOSE);
        }
        out.push_str(&self.tail);
        out
    }

    /// Actions that received an observation, in order.
    pub fn executed_actions(&self) -> Vec<&Action> {
        self.rounds
            .iter()
            .filter(|r| r.observation.is_some())
            .filter_map(|r| r.action.as_ref())
            .collect()
    }

    pub fn segments(&self) -> Vec<Segment> {
        segment_reasoning(&self.render())
    }
}

/// Splits a complete trajectory into rounds. An action counts as executed
/// when a documents block follows it before the next query or answer.
pub fn parse_trajectory(raw: &str) -> Result<Trajectory, ParseError> {
    let mut rounds = Vec::new();
    let mut pos = 0;
    loop {
        let rest = &raw[pos..];
        let parsed = parse_response(rest).map_err(|e| shift(e, pos))?;
        if let Some(action) = parsed.action {
            let after = pos + parsed.consumed;
            let next_q = find_from(raw, QUERY_BEGIN, after);
            let next_a = find_from(raw, ANSWER_OPEN, after);
            let docs = find_from(raw, DOCS_BEGIN, after)
                .filter(|&d| earliest(&[next_q, next_a]).is_none_or(|stop| d < stop));
            let (observation, next) = match docs {
                Some(d) => {
                    let end = find_from(raw, DOCS_END, d)
                        .ok_or(ParseError::UnterminatedDocuments { at: d })?;
                    let end = end + DOCS_END.len();
                    (Some(raw[after..end].to_string()), end)
                }
                None => (None, after),
            };
            rounds.push(Round {
                reasoning: parsed.reasoning,
                action: Some(action),
                observation,
            });
            pos = next;
            continue;
        }
        let answered = parsed.answer.is_some();
        let tail = if answered {
            let open = pos + parsed.reasoning.len();
            let close = find_from(raw, ANSWER_CLOSE, open + ANSWER_OPEN.len())
                .expect("parsed answer has a close tag");
            raw[close + ANSWER_CLOSE.len()..].to_string()
        } else {
            String::new()
        };
        rounds.push(Round {
            reasoning: parsed.reasoning,
            action: None,
            observation: None,
        });
        return Ok(Trajectory {
            rounds,
            answer: parsed.answer,
            tail,
        });
    }
}

fn shift(e: ParseError, by: usize) -> ParseError {
    match e {
        ParseError::UnterminatedQuery { at } => ParseError::UnterminatedQuery { at: at + by },
        ParseError::UnterminatedAnswer { at } => ParseError::UnterminatedAnswer { at: at + by },
        ParseError::UnterminatedDocuments { at } => {
            ParseError::UnterminatedDocuments { at: at + by }
        }
        ParseError::UnexpectedTag { tag, at } => ParseError::UnexpectedTag { tag, at: at + by },
        other => other,
    }
}

/// True when `prefix` ends inside an open `<think>` block.
pub fn inside_think(prefix: &str) -> bool {
    match (prefix.rfind(THINK_OPEN), prefix.rfind(THINK_CLOSE)) {
        (Some(o), Some(c)) => o > c,
        (Some(_), None) => true,
        _ => false,
    }
}

pub fn whitespace_tokens(s: &str) -> usize {
    s.split_whitespace().count()
}

/// Lowercase, trim, collapse internal whitespace.
pub fn normalize_label(s: &str) -> String {
    s.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

fn answer_block(text: &str) -> Option<(usize, &str)> {
    let open = text.find(ANSWER_OPEN)?;
    let body = open + ANSWER_OPEN.len();
    let end = find_from(text, ANSWER_CLOSE, body)?;
    Some((open, &text[body..end]))
}

/// Normalized content of the answer block, `None` when there is no complete
/// block.
pub fn extract_answer(text: &str) -> Option<String> {
    answer_block(text).map(|(_, body)| normalize_label(body))
}

/// The sentence injected after each stage-2 tool call.
pub fn retrospective_trigger(tool: Tool) -> String {
    format!(
        "Let me first carefully review the searched documents of {} and decide whether another search is necessary before proceeding.",
        tool.wire_name()
    )
}

/// One query tag found by a literal scan.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryOccurrence {
    pub at: usize,
    pub tool: Option<Tool>,
    pub in_think: bool,
    pub executed: bool,
}

/// Lenient scan of every query tag, including malformed ones.
pub fn scan_queries(text: &str) -> Vec<QueryOccurrence> {
    let mut out = Vec::new();
    let mut from = 0;
    while let Some(at) = find_from(text, QUERY_BEGIN, from) {
        let body = at + QUERY_BEGIN.len();
        let next_begin = find_from(text, QUERY_BEGIN, body);
        let end = find_from(text, QUERY_END, body).filter(|&e| next_begin.is_none_or(|n| e < n));
        let tool = end
            .and_then(|e| Action::parse(&text[body..e]).ok())
            .map(|a| a.tool);
        let after = end.map_or(body, |e| e + QUERY_END.len());
        let stop = earliest(&[
            find_from(text, QUERY_BEGIN, after),
            find_from(text, ANSWER_OPEN, after),
        ]);
        let executed = tool.is_some()
            && find_from(text, DOCS_BEGIN, after).is_some_and(|d| stop.is_none_or(|s| d < s));
        out.push(QueryOccurrence {
            at,
            tool,
            in_think: inside_think(&text[..at]),
            executed,
        });
        from = body;
    }
    out
}

/// Literal tag counts and answer checks behind the format reward.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct FormatReport {
    pub think_count: usize,
    pub think_close_count: usize,
    pub answer_count: usize,
    pub answer_close_count: usize,
    pub query_begin_count: usize,
    pub query_end_count: usize,
    pub doc_begin_count: usize,
    pub doc_end_count: usize,
    pub answer_contains_tool_tags: bool,
    pub answer_token_count: usize,
    pub answer_contains_think: bool,
    pub queries_outside_think: usize,
    pub executed_searches: usize,
    pub tools_used: BTreeSet<Tool>,
    pub parse_ok: bool,
}

impl FormatReport {
    /// Exactly one `<think>…</think>` and exactly one `<answer>…</answer>`.
    pub fn single_think_and_answer(&self) -> bool {
        self.think_count == 1
            && self.think_close_count == 1
            && self.answer_count == 1
            && self.answer_close_count == 1
    }

    pub fn tags_balanced(&self) -> bool {
        self.query_begin_count == self.query_end_count && self.doc_begin_count == self.doc_end_count
    }
}

pub fn validate_format(text: &str) -> FormatReport {
    let count = |pat: &str| text.matches(pat).count();
    let mut report = FormatReport {
        think_count: count(THINK_OPEN),
        think_close_count: count(THINK_CLOSE),
        answer_count: count(ANSWER_OPEN),
        answer_close_count: count(ANSWER_CLOSE),
        query_begin_count: count(QUERY_BEGIN),
        query_end_count: count(QUERY_END),
        doc_begin_count: count(DOCS_BEGIN),
        doc_end_count: count(DOCS_END),
        ..Default::default()
    };

    // An unclosed answer block runs to the end of the text.
    let block = answer_block(text).map(|(_, b)| b).or_else(|| {
        text.find(ANSWER_OPEN)
            .map(|o| &text[o + ANSWER_OPEN.len()..])
    });
    if let Some(body) = block {
        report.answer_contains_tool_tags = TOOL_TAGS.iter().any(|t| body.contains(t));
        report.answer_contains_think = body.contains(THINK_OPEN) || body.contains(THINK_CLOSE);
        report.answer_token_count = whitespace_tokens(body);
    }

    for q in scan_queries(text) {
        if !q.in_think {
            report.queries_outside_think += 1;
        }
        if q.executed {
            report.executed_searches += 1;
            report.tools_used.extend(q.tool);
        }
    }

    let ordered = |open: &str, close: &str| match (text.find(open), text.find(close)) {
        (Some(o), Some(c)) => o < c,
        _ => false,
    };
    report.parse_ok = report.single_think_and_answer()
        && report.tags_balanced()
        && ordered(THINK_OPEN, THINK_CLOSE)
        && ordered(ANSWER_OPEN, ANSWER_CLOSE)
        && parse_trajectory(text).is_ok();
    report
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Segment {
    pub text: String,
    pub tokens: usize,
}

/// Post-retrieval reasoning: for each documents block, the text from its end
/// delimiter up to the next query tag, `</think>` or answer block. A leading
/// retrospective trigger sentence is environment text and is not counted.
pub fn segment_reasoning(raw: &str) -> Vec<Segment> {
    let mut out = Vec::new();
    let mut from = 0;
    while let Some(at) = find_from(raw, DOCS_END, from) {
        let start = at + DOCS_END.len();
        let stop = earliest(&[
            find_from(raw, QUERY_BEGIN, start),
            find_from(raw, THINK_CLOSE, start),
            find_from(raw, ANSWER_OPEN, start),
        ])
        .unwrap_or(raw.len());
        let mut text = &raw[start..stop];
        let trimmed = text.trim_start();
        for tool in Tool::ALL {
            let trigger = retrospective_trigger(tool);
            if let Some(rest) = trimmed.strip_prefix(trigger.as_str()) {
                text = rest;
                break;
            }
        }
        out.push(Segment {
            text: text.to_string(),
            tokens: whitespace_tokens(text),
        });
        from = start;
    }
    out
}
