//! Composite trajectory rewards.
//!
//! Stage 1: `format + accuracy + coverage`. Stage 2: `format + accuracy +
//! depth`, where depth rewards post-retrieval reasoning segments of at least
//! `delta_tokens` whitespace tokens.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::par;
use crate::protocol::{
    extract_answer, normalize_label, segment_reasoning, validate_format, FormatReport,
};
use crate::task::Stage;
use crate::tools::Tool;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DepthPenalty {
    /// `−λ_d` per short segment.
    #[default]
    PerSegment,
    /// A single `−λ_d` when any segment is short.
    Flat,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    pub acc_match: f64,
    pub acc_mismatch: f64,
    pub acc_missing: f64,
    pub acc_invalid: f64,
    pub think_answer_ok: f64,
    pub think_answer_bad: f64,
    pub tags_ok: f64,
    pub tags_bad: f64,
    pub leak_penalty: f64,
    pub verbose_penalty: f64,
    pub residual_think_penalty: f64,
    pub verbose_limit: usize,
    pub cov_per_tool: f64,
    pub cov_cap: f64,
    pub depth_alpha: f64,
    pub depth_lambda: f64,
    pub delta_tokens: usize,
    pub depth_penalty: DepthPenalty,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            acc_match: 1.5,
            acc_mismatch: 0.0,
            acc_missing: -1.0,
            acc_invalid: -0.5,
            think_answer_ok: 0.5,
            think_answer_bad: -0.5,
            tags_ok: 0.1,
            tags_bad: -0.3,
            leak_penalty: -0.5,
            verbose_penalty: -0.2,
            residual_think_penalty: -0.3,
            verbose_limit: 12,
            cov_per_tool: 0.5,
            cov_cap: 0.5 * Tool::ALL.len() as f64,
            depth_alpha: 0.5,
            depth_lambda: 0.2,
            delta_tokens: 100,
            depth_penalty: DepthPenalty::PerSegment,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.delta_tokens == 0 {
            return Err("delta_tokens must be positive".into());
        }
        let reals = [
            self.acc_match,
            self.acc_mismatch,
            self.acc_missing,
            self.acc_invalid,
            self.think_answer_ok,
            self.think_answer_bad,
            self.tags_ok,
            self.tags_bad,
            self.leak_penalty,
            self.verbose_penalty,
            self.residual_think_penalty,
            self.cov_per_tool,
            self.cov_cap,
            self.depth_alpha,
            self.depth_lambda,
        ];
        if reals.iter().any(|x| !x.is_finite()) {
            return Err("reward constants must be finite".into());
        }
        Ok(())
    }
}

/// Rounds to a 1e-9 grid so sums of decimal constants compare equal to their
/// decimal totals (0.6 + 1.5 + 2.0 == 4.1).
fn quantize(x: f64) -> f64 {
    (x * 1e9).round() / 1e9
}

pub fn accuracy_reward(
    pred: Option<&str>,
    gold: &str,
    valid_index: bool,
    cfg: &RewardConfig,
) -> f64 {
    if !valid_index {
        return cfg.acc_invalid;
    }
    match pred {
        None => cfg.acc_missing,
        Some(p) if normalize_label(p) == normalize_label(gold) => cfg.acc_match,
        Some(_) => cfg.acc_mismatch,
    }
}

pub fn format_reward(report: &FormatReport, cfg: &RewardConfig) -> f64 {
    let mut r = if report.single_think_and_answer() {
        cfg.think_answer_ok
    } else {
        cfg.think_answer_bad
    };
    r += if report.tags_balanced() {
        cfg.tags_ok
    } else {
        cfg.tags_bad
    };
    if report.answer_contains_tool_tags {
        r += cfg.leak_penalty;
    }
    if report.answer_token_count > cfg.verbose_limit {
        r += cfg.verbose_penalty;
    }
    if report.answer_contains_think {
        r += cfg.residual_think_penalty;
    }
    quantize(r)
}

pub fn coverage_reward(tools_used: &BTreeSet<Tool>, cfg: &RewardConfig) -> f64 {
    quantize((cfg.cov_per_tool * tools_used.len() as f64).min(cfg.cov_cap))
}

/// Returns `(reward, n_short)`. No segments counts as no short segments.
pub fn depth_reward(segment_tokens: &[usize], cfg: &RewardConfig) -> (f64, usize) {
    let n_short = segment_tokens
        .iter()
        .filter(|&&t| t < cfg.delta_tokens)
        .count();
    let r = if n_short == 0 {
        cfg.depth_alpha
    } else {
        match cfg.depth_penalty {
            DepthPenalty::PerSegment => -cfg.depth_lambda * n_short as f64,
            DepthPenalty::Flat => -cfg.depth_lambda,
        }
    };
    (quantize(r), n_short)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RewardBreakdown {
    pub stage: Stage,
    pub r_fmt: f64,
    pub r_acc: f64,
    pub r_cov: f64,
    pub r_depth: f64,
    pub total: f64,
    pub n_short: usize,
    pub searches: usize,
    pub tools_used: BTreeSet<Tool>,
    pub prediction: Option<String>,
    pub correct: bool,
}

/// Scores a full trajectory text (model output plus observations, without
/// the prompt) against `gold`.
pub fn score_response(
    response: &str,
    gold: &str,
    stage: Stage,
    valid_index: bool,
    cfg: &RewardConfig,
) -> RewardBreakdown {
    let report = validate_format(response);
    let prediction = extract_answer(response);
    let r_fmt = format_reward(&report, cfg);
    let r_acc = quantize(accuracy_reward(
        prediction.as_deref(),
        gold,
        valid_index,
        cfg,
    ));
    let correct = valid_index
        && prediction
            .as_deref()
            .is_some_and(|p| p == normalize_label(gold));

    let (r_cov, r_depth, n_short) = match stage {
        Stage::Bootstrap => (coverage_reward(&report.tools_used, cfg), 0.0, 0),
        Stage::Mso => {
            let tokens: Vec<usize> = segment_reasoning(response)
                .iter()
                .map(|s| s.tokens)
                .collect();
            let (r, n) = depth_reward(&tokens, cfg);
            (0.0, r, n)
        }
    };
    let stage_term = match stage {
        Stage::Bootstrap => r_cov,
        Stage::Mso => r_depth,
    };
    RewardBreakdown {
        stage,
        r_fmt,
        r_acc,
        r_cov,
        r_depth,
        total: quantize(r_fmt + r_acc + stage_term),
        n_short,
        searches: report.executed_searches,
        tools_used: report.tools_used,
        prediction,
        correct,
    }
}

/// Same as [`score_response`] with a valid sample index.
pub fn total_reward(
    response: &str,
    gold: &str,
    stage: Stage,
    cfg: &RewardConfig,
) -> RewardBreakdown {
    score_response(response, gold, stage, true, cfg)
}

/// One line of a batch scoring request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub response: String,
    pub gold: String,
    #[serde(default)]
    pub stage: Stage,
    #[serde(default = "default_true")]
    pub valid_index: bool,
}

fn default_true() -> bool {
    true
}

/// Scores every request; output order matches input order.
pub fn score_batch(items: &[ScoreRequest], cfg: &RewardConfig) -> Vec<RewardBreakdown> {
    par::map(items, |it| {
        score_response(&it.response, &it.gold, it.stage, it.valid_index, cfg)
    })
}
