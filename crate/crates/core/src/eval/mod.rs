//! Generation quality and security evaluation: BLEU and CrystalBLEU under
//! both tokenizations, rule-based vulnerability detectors, and the
//! functional / labeling / avoidance protocols.

mod detectors;
mod diff;
mod protocol;

pub use detectors::{detect_vulnerability_pattern, Detection, Evidence};
pub use diff::unified_diff;
pub use protocol::{
    evaluate_functional, evaluate_security, extract_functional_samples,
    security_samples_from_annotations, security_samples_from_labeled, FunctionalEvalConfig,
    FunctionalReport, FunctionalSample, FunctionalScores, Rate, SecurityReport, SecuritySample,
    SecurityVerdict,
};

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::TokenSource;
use crate::decoding::DecodeError;
use crate::labeling::LabelError;
use crate::lexer::{self, TokenKind};

/// Epsilon substituted for zero clipped-match counts so log-precisions stay
/// finite.
pub const BLEU_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Smoothing {
    None,
    Epsilon,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BleuConfig {
    pub max_n: usize,
    pub smoothing: Smoothing,
    pub tokenizer: TokenSource,
}

impl Default for BleuConfig {
    fn default() -> Self {
        BleuConfig {
            max_n: 4,
            smoothing: Smoothing::Epsilon,
            tokenizer: TokenSource::SolidityLexer,
        }
    }
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("reference token sequence is empty")]
    EmptyReference,
    #[error("no samples to evaluate")]
    NoSamples,
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Label(#[from] LabelError),
}

/// Tokens used for metric computation: whitespace tokens are dropped, all
/// other token texts kept in order.
pub fn metric_tokens(text: &str, tokenizer: TokenSource) -> Vec<String> {
    match tokenizer {
        TokenSource::SolidityLexer => lexer::tokenize_solidity(text)
            .tokens
            .into_iter()
            .filter(|t| t.kind != TokenKind::Whitespace)
            .map(|t| t.text)
            .collect(),
        TokenSource::Whitespace => lexer::tokenize_whitespace(text)
            .into_iter()
            .filter(|t| t.kind != TokenKind::Whitespace)
            .map(|t| t.text)
            .collect(),
    }
}

type Ngram = Vec<String>;

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<Ngram, usize> {
    let mut counts = HashMap::new();
    if n == 0 || tokens.len() < n {
        return counts;
    }
    for window in tokens.windows(n) {
        *counts.entry(window.to_vec()).or_insert(0) += 1;
    }
    counts
}

fn brevity_penalty(candidate_len: usize, reference_len: usize) -> f64 {
    if candidate_len >= reference_len {
        1.0
    } else {
        (1.0 - reference_len as f64 / candidate_len as f64).exp()
    }
}

// Geometric mean of modified n-gram precisions times the brevity penalty.
// Orders where the candidate has no n-grams at all are skipped; orders with
// n-grams but zero clipped matches take the epsilon floor (or zero the score
// when smoothing is off).
fn bleu_from_multisets(
    candidate_len: usize,
    reference_len: usize,
    precisions: &[(usize, usize)], // (clipped matches, candidate total) per order
    smoothing: Smoothing,
) -> f64 {
    let mut log_sum = 0.0;
    let mut orders = 0usize;
    for &(matches, total) in precisions {
        if total == 0 {
            continue;
        }
        orders += 1;
        let p = if matches == 0 {
            match smoothing {
                Smoothing::Epsilon => BLEU_EPSILON / total as f64,
                Smoothing::None => return 0.0,
            }
        } else {
            matches as f64 / total as f64
        };
        log_sum += p.ln();
    }
    if orders == 0 {
        return 0.0;
    }
    brevity_penalty(candidate_len, reference_len) * (log_sum / orders as f64).exp()
}

/// Sentence BLEU for one candidate/reference pair.
pub fn bleu(candidate: &[String], reference: &[String], cfg: &BleuConfig) -> Result<f64, EvalError> {
    if reference.is_empty() {
        return Err(EvalError::EmptyReference);
    }
    if candidate.is_empty() {
        return Ok(0.0);
    }
    let mut precisions = Vec::with_capacity(cfg.max_n);
    for n in 1..=cfg.max_n {
        let cand = ngram_counts(candidate, n);
        let total: usize = cand.values().sum();
        let refs = ngram_counts(reference, n);
        let matches: usize = cand
            .iter()
            .map(|(g, c)| (*c).min(refs.get(g).copied().unwrap_or(0)))
            .sum();
        precisions.push((matches, total));
    }
    Ok(bleu_from_multisets(
        candidate.len(),
        reference.len(),
        &precisions,
        cfg.smoothing,
    ))
}

/// CrystalBLEU configuration: the `k_trivial` most frequent n-grams of a
/// reference corpus, removed from both sides before scoring.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrystalConfig {
    pub k_trivial: usize,
    pub max_n: usize,
    pub trivial_ngrams: BTreeSet<Ngram>,
}

impl CrystalConfig {
    pub fn new(k_trivial: usize, max_n: usize) -> Self {
        CrystalConfig {
            k_trivial,
            max_n,
            trivial_ngrams: BTreeSet::new(),
        }
    }

    /// Compute the trivially-shared n-gram set from a reference corpus.
    pub fn from_reference_corpus(
        corpus: &[Vec<String>],
        k_trivial: usize,
        max_n: usize,
    ) -> Self {
        CrystalConfig {
            k_trivial,
            max_n,
            trivial_ngrams: extract_trivial_ngrams(corpus, k_trivial, max_n),
        }
    }
}

/// The `k_trivial` most frequent n-grams (n = 1..=max_n, pooled) of the
/// corpus; ties broken by frequency then lexicographic order.
pub fn extract_trivial_ngrams(
    corpus: &[Vec<String>],
    k_trivial: usize,
    max_n: usize,
) -> BTreeSet<Ngram> {
    let mut counts: HashMap<Ngram, usize> = HashMap::new();
    for tokens in corpus {
        for n in 1..=max_n {
            for (g, c) in ngram_counts(tokens, n) {
                *counts.entry(g).or_insert(0) += c;
            }
        }
    }
    let mut ordered: Vec<(Ngram, usize)> = counts.into_iter().collect();
    ordered.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ordered
        .into_iter()
        .take(k_trivial)
        .map(|(g, _)| g)
        .collect()
}

/// BLEU after deleting every trivially-shared n-gram from both the candidate
/// and reference multisets. With an empty trivial set this is exactly `bleu`.
pub fn crystal_bleu(
    candidate: &[String],
    reference: &[String],
    cfg: &CrystalConfig,
    smoothing: Smoothing,
) -> Result<f64, EvalError> {
    if reference.is_empty() {
        return Err(EvalError::EmptyReference);
    }
    if candidate.is_empty() {
        return Ok(0.0);
    }
    let mut precisions = Vec::with_capacity(cfg.max_n);
    let mut any_survivors = false;
    for n in 1..=cfg.max_n {
        let mut cand = ngram_counts(candidate, n);
        let mut refs = ngram_counts(reference, n);
        cand.retain(|g, _| !cfg.trivial_ngrams.contains(g));
        refs.retain(|g, _| !cfg.trivial_ngrams.contains(g));
        let total: usize = cand.values().sum();
        if total > 0 {
            any_survivors = true;
        }
        let matches: usize = cand
            .iter()
            .map(|(g, c)| (*c).min(refs.get(g).copied().unwrap_or(0)))
            .sum();
        precisions.push((matches, total));
    }
    if !any_survivors {
        // everything the candidate contains is trivial; identical inputs are
        // a perfect match, anything else scores zero
        return Ok(if candidate == reference { 1.0 } else { 0.0 });
    }
    Ok(bleu_from_multisets(
        candidate.len(),
        reference.len(),
        &precisions,
        smoothing,
    ))
}
