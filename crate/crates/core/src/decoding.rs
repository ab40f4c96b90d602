//! Constrained text generation: greedy and beam search over any
//! `LanguageModel`, with forbidden-token logit masking and a brace-matching
//! stopping strategy for function completion.
//!
//! Masking sets the logit of every forbidden token to negative infinity
//! before the next token is chosen, so a forbidden token has softmax
//! probability exactly zero and can never be generated, under either search
//! strategy.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::labeling::VulnType;
use crate::lexer::{self, TokenKind};
use crate::lm::{LanguageModel, LogitVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Greedy,
    Beam,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopRule {
    /// Stop when the brace depth returns to the generation-start level (after
    /// at least one opened brace) or would drop below it.
    BraceBalance,
    EosOnly,
    MaxTokens,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    BraceClosed,
    Eos,
    MaxTokens,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecodeConfig {
    pub strategy: Strategy,
    /// Treated as 1 under the greedy strategy.
    pub beam_width: usize,
    pub max_new_tokens: usize,
    pub forbidden_ids: BTreeSet<u32>,
    pub stop_rule: StopRule,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            strategy: Strategy::Greedy,
            beam_width: 1,
            max_new_tokens: 128,
            forbidden_ids: BTreeSet::new(),
            stop_rule: StopRule::BraceBalance,
        }
    }
}

impl DecodeConfig {
    /// Constrained variant: every label token in the vocabulary is forbidden.
    pub fn constrained(mut self, model: &dyn LanguageModel) -> Self {
        self.forbidden_ids = model
            .vocabulary()
            .label_ids()
            .into_iter()
            .map(|(_, id)| id)
            .collect();
        self
    }

    fn effective_width(&self) -> usize {
        match self.strategy {
            Strategy::Greedy => 1,
            Strategy::Beam => self.beam_width,
        }
    }

    fn validate(&self, vocab_len: usize) -> Result<(), DecodeError> {
        if self.max_new_tokens < 1 {
            return Err(DecodeError::InvalidConfig(
                "max_new_tokens must be >= 1".into(),
            ));
        }
        if self.beam_width < 1 {
            return Err(DecodeError::InvalidConfig("beam_width must be >= 1".into()));
        }
        if let Some(&id) = self.forbidden_ids.iter().find(|&&id| id as usize >= vocab_len) {
            return Err(DecodeError::InvalidForbiddenId {
                id,
                vocab_len,
            });
        }
        Ok(())
    }
}

/// One finished generation.
#[derive(Debug, Clone)]
pub struct GenerationResult {
    pub token_ids: Vec<u32>,
    pub text: String,
    pub stop_reason: StopReason,
    /// Label tokens that appeared in the output with their positions; always
    /// empty when those labels were forbidden.
    pub emitted_labels: Vec<(VulnType, usize)>,
}

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("context must not be empty")]
    EmptyContext,
    #[error("source prefix must not be empty")]
    EmptyPrefix,
    #[error("all vocabulary tokens are forbidden: no valid continuation")]
    AllTokensForbidden,
    #[error("forbidden id {id} out of range for vocabulary of {vocab_len}")]
    InvalidForbiddenId { id: u32, vocab_len: usize },
    #[error("invalid decode configuration: {0}")]
    InvalidConfig(String),
}

/// Set the logit of every forbidden id to negative infinity. The remaining
/// entries are untouched, so softmax over the result is exactly the original
/// distribution renormalized over the allowed tokens.
pub fn mask_forbidden(
    logits: &LogitVector,
    forbidden_ids: &BTreeSet<u32>,
) -> Result<LogitVector, DecodeError> {
    if forbidden_ids.len() >= logits.len()
        && (0..logits.len() as u32).all(|id| forbidden_ids.contains(&id))
    {
        return Err(DecodeError::AllTokensForbidden);
    }
    if let Some(&id) = forbidden_ids
        .iter()
        .find(|&&id| id as usize >= logits.len())
    {
        return Err(DecodeError::InvalidForbiddenId {
            id,
            vocab_len: logits.len(),
        });
    }
    let mut out = logits.clone();
    for &id in forbidden_ids {
        out.values[id as usize] = f64::NEG_INFINITY;
    }
    Ok(out)
}

/// Brace-nesting tracker, relative to the start of generation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BraceState {
    depth: i64,
    opened: bool,
}

impl BraceState {
    pub fn new() -> Self {
        BraceState::default()
    }

    pub fn depth(&self) -> i64 {
        self.depth
    }
}

/// Advance the brace state by one generated token; returns true when
/// generation should stop after emitting this token. Only bare `{` / `}`
/// punctuation tokens count: braces inside string or comment tokens are part
/// of longer token texts and never match.
pub fn brace_stop(state: &mut BraceState, token_text: &str) -> bool {
    match token_text {
        "{" => {
            state.depth += 1;
            state.opened = true;
            false
        }
        "}" => {
            state.depth -= 1;
            // back at the start level after opening, or closing the
            // enclosing function
            (state.depth == 0 && state.opened) || state.depth < 0
        }
        _ => false,
    }
}

fn decode_result(model: &dyn LanguageModel, ids: Vec<u32>, stop_reason: StopReason) -> GenerationResult {
    let vocab = model.vocabulary();
    let text = vocab.decode(&ids);
    let labels = vocab.label_ids();
    let emitted_labels = ids
        .iter()
        .enumerate()
        .filter_map(|(pos, id)| {
            labels
                .iter()
                .find(|(_, lid)| lid == id)
                .map(|(vt, _)| (*vt, pos))
        })
        .collect();
    GenerationResult {
        token_ids: ids,
        text,
        stop_reason,
        emitted_labels,
    }
}

fn window<'a>(model: &dyn LanguageModel, ids: &'a [u32]) -> &'a [u32] {
    let start = ids.len().saturating_sub(model.context_limit());
    &ids[start..]
}

/// Greedy search: at each step mask the forbidden ids and take the argmax
/// (ties to the lowest token id) until the stop rule fires or the token
/// budget runs out.
pub fn decode_greedy(
    model: &dyn LanguageModel,
    context: &[u32],
    cfg: &DecodeConfig,
) -> Result<GenerationResult, DecodeError> {
    cfg.validate(model.vocabulary().len())?;
    if context.is_empty() {
        return Err(DecodeError::EmptyContext);
    }
    let eos = model.vocabulary().eos_id();
    let mut ids = context.to_vec();
    let mut generated = Vec::new();
    let mut brace = BraceState::new();
    let mut stop_reason = StopReason::MaxTokens;
    while generated.len() < cfg.max_new_tokens {
        let logits = model.next_token_logits(window(model, &ids));
        let masked = mask_forbidden(&logits, &cfg.forbidden_ids)?;
        let next = masked.argmax().ok_or(DecodeError::AllTokensForbidden)?;
        if next == eos {
            stop_reason = StopReason::Eos;
            break;
        }
        ids.push(next);
        generated.push(next);
        if cfg.stop_rule == StopRule::BraceBalance
            && brace_stop(&mut brace, model.vocabulary().token(next))
        {
            stop_reason = StopReason::BraceClosed;
            break;
        }
    }
    Ok(decode_result(model, generated, stop_reason))
}

#[derive(Debug, Clone)]
struct Hypothesis {
    ids: Vec<u32>,
    score: f64,
    brace: BraceState,
}

impl Hypothesis {
    fn normalized(&self) -> f64 {
        self.score / self.ids.len().max(1) as f64
    }
}

/// Length-normalized beam search over masked logits. Width 1 reproduces
/// greedy token for token; ties break on score then lexicographic token-id
/// sequence.
pub fn decode_beam(
    model: &dyn LanguageModel,
    context: &[u32],
    cfg: &DecodeConfig,
) -> Result<GenerationResult, DecodeError> {
    cfg.validate(model.vocabulary().len())?;
    if context.is_empty() {
        return Err(DecodeError::EmptyContext);
    }
    let width = cfg.effective_width();
    let eos = model.vocabulary().eos_id();

    let mut active = vec![Hypothesis {
        ids: Vec::new(),
        score: 0.0,
        brace: BraceState::new(),
    }];
    let mut finished: Vec<(Hypothesis, StopReason)> = Vec::new();

    for _step in 0..cfg.max_new_tokens {
        if active.is_empty() {
            break;
        }
        // (score, candidate ids, parent index, token)
        let mut candidates: Vec<(f64, Vec<u32>, usize, u32)> = Vec::new();
        for (h_idx, hyp) in active.iter().enumerate() {
            let mut ctx = Vec::with_capacity(context.len() + hyp.ids.len());
            ctx.extend_from_slice(context);
            ctx.extend_from_slice(&hyp.ids);
            let logits = model.next_token_logits(window(model, &ctx));
            let masked = mask_forbidden(&logits, &cfg.forbidden_ids)?;
            let probs = masked.softmax();
            let mut scored: Vec<(f64, u32)> = probs
                .iter()
                .enumerate()
                .filter(|(_, p)| **p > 0.0)
                .map(|(id, p)| (hyp.score + p.ln(), id as u32))
                .collect();
            if scored.is_empty() {
                return Err(DecodeError::AllTokensForbidden);
            }
            scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
            for (score, id) in scored.into_iter().take(width) {
                let mut ids = hyp.ids.clone();
                ids.push(id);
                candidates.push((score, ids, h_idx, id));
            }
        }
        candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));

        let mut next_active = Vec::with_capacity(width);
        for (score, ids, h_idx, token) in candidates {
            if next_active.len() >= width {
                break;
            }
            if token == eos {
                finished.push((
                    Hypothesis {
                        ids: ids[..ids.len() - 1].to_vec(),
                        score,
                        brace: active[h_idx].brace,
                    },
                    StopReason::Eos,
                ));
                continue;
            }
            let mut brace = active[h_idx].brace;
            let stops = cfg.stop_rule == StopRule::BraceBalance
                && brace_stop(&mut brace, model.vocabulary().token(token));
            let hyp = Hypothesis { ids, score, brace };
            if stops {
                finished.push((hyp, StopReason::BraceClosed));
            } else {
                next_active.push(hyp);
            }
        }
        active = next_active;
    }

    for hyp in active {
        finished.push((hyp, StopReason::MaxTokens));
    }
    let best = finished
        .into_iter()
        .max_by(|(a, _), (b, _)| {
            a.normalized()
                .total_cmp(&b.normalized())
                .then_with(|| b.ids.cmp(&a.ids))
        })
        .ok_or(DecodeError::AllTokensForbidden)?;
    Ok(decode_result(model, best.0.ids, best.1))
}

/// Dispatch on the configured strategy.
pub fn decode(
    model: &dyn LanguageModel,
    context: &[u32],
    cfg: &DecodeConfig,
) -> Result<GenerationResult, DecodeError> {
    match cfg.strategy {
        Strategy::Greedy => decode_greedy(model, context, cfg),
        Strategy::Beam => decode_beam(model, context, cfg),
    }
}

/// A completion stitched back onto its prefix.
#[derive(Debug, Clone)]
pub struct CompletionResult {
    pub generation: GenerationResult,
    pub full_text: String,
}

/// Complete source text from `source_prefix`: tokenize, truncate the context
/// to the model's window, and decode under the configured strategy and stop
/// rule. A prefix whose braces are already balanced yields an immediate
/// empty completion.
pub fn complete_function(
    model: &dyn LanguageModel,
    source_prefix: &str,
    cfg: &DecodeConfig,
) -> Result<CompletionResult, DecodeError> {
    if source_prefix.is_empty() {
        return Err(DecodeError::EmptyPrefix);
    }
    if cfg.stop_rule == StopRule::BraceBalance && prefix_brace_depth(source_prefix) == 0 {
        return Ok(CompletionResult {
            generation: GenerationResult {
                token_ids: Vec::new(),
                text: String::new(),
                stop_reason: StopReason::BraceClosed,
                emitted_labels: Vec::new(),
            },
            full_text: source_prefix.to_string(),
        });
    }
    let ids = model
        .vocabulary()
        .encode(source_prefix, model.tokenizer());
    let start = ids.len().saturating_sub(model.context_limit());
    let generation = decode(model, &ids[start..], cfg)?;
    let full_text = format!("{source_prefix}{}", generation.text);
    Ok(CompletionResult {
        generation,
        full_text,
    })
}

// absolute brace depth of a source prefix, string/comment contents excluded
fn prefix_brace_depth(text: &str) -> i64 {
    let mut depth = 0i64;
    for tok in lexer::tokenize_solidity(text).tokens {
        if tok.kind == TokenKind::Punctuation {
            match tok.text.as_str() {
                "{" => depth += 1,
                "}" => depth -= 1,
                _ => {}
            }
        }
    }
    depth
}
