//! Autoregressive language-model contract and a deterministic n-gram
//! reference backend.
//!
//! The `LanguageModel` trait is the only surface decoding and evaluation see:
//! context token ids in, one logit per vocabulary entry out. The bundled
//! backend is an interpolated additive-smoothed n-gram model, which trains in
//! seconds and is exactly reproducible, so the constrained-decoding pipeline
//! can be exercised end to end without a neural network. Any backend that
//! produces logits over the same vocabulary can be plugged in instead.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{SourceFile, TokenSource};
use crate::labeling::VulnType;
use crate::lexer::{self, LabelRegistry};

pub const UNK_TOKEN: &str = "<unk>";
pub const EOS_TOKEN: &str = "<eos>";
const ARTIFACT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum LmError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed model artifact: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error("incompatible artifact version {found}, expected {expected}")]
    IncompatibleArtifact { found: u32, expected: u32 },
}

/// Bidirectional token/id map with a special-token flag set.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: HashMap<String, u32>,
    special: BTreeSet<u32>,
    unk_id: u32,
    eos_id: u32,
}

impl Vocabulary {
    fn with_reserved() -> Vocabulary {
        let mut v = Vocabulary {
            tokens: Vec::new(),
            ids: HashMap::new(),
            special: BTreeSet::new(),
            unk_id: 0,
            eos_id: 1,
        };
        v.push(UNK_TOKEN.to_string(), true);
        v.push(EOS_TOKEN.to_string(), true);
        v
    }

    fn push(&mut self, token: String, special: bool) -> u32 {
        debug_assert!(!self.ids.contains_key(&token));
        let id = self.tokens.len() as u32;
        self.ids.insert(token.clone(), id);
        self.tokens.push(token);
        if special {
            self.special.insert(id);
        }
        id
    }

    /// Build a vocabulary from an explicit token list (reserved tokens are
    /// prepended). Mostly useful for hand-built models in tests and demos.
    pub fn from_token_list<I, S>(tokens: I) -> Vocabulary
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut v = Vocabulary::with_reserved();
        for t in tokens {
            let t = t.into();
            if !v.ids.contains_key(&t) {
                v.push(t, false);
            }
        }
        v
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn unk_id(&self) -> u32 {
        self.unk_id
    }

    pub fn eos_id(&self) -> u32 {
        self.eos_id
    }

    pub fn id_of(&self, token: &str) -> Option<u32> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    pub fn is_special(&self, id: u32) -> bool {
        self.special.contains(&id)
    }

    pub fn special_ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.special.iter().copied()
    }

    /// Ids of special tokens that are vulnerability labels, with their types.
    pub fn label_ids(&self) -> Vec<(VulnType, u32)> {
        self.special
            .iter()
            .filter_map(|&id| {
                VulnType::from_label_token(self.token(id)).map(|vt| (vt, id))
            })
            .collect()
    }

    fn label_registry(&self) -> LabelRegistry {
        LabelRegistry::new(
            self.label_ids()
                .into_iter()
                .map(|(vt, _)| vt.label_token()),
        )
    }

    /// Append label tokens as atomic special entries. Existing ids are left
    /// untouched; labels already present are skipped with a warning.
    pub fn extend_with_special_tokens(&mut self, labels: &[VulnType]) -> Vec<String> {
        let mut warnings = Vec::new();
        for vt in labels {
            let token = vt.label_token();
            if self.ids.contains_key(&token) {
                warnings.push(format!("label {token} already in vocabulary, skipping"));
                continue;
            }
            self.push(token, true);
        }
        warnings
    }

    /// Tokenize `text` into vocabulary ids. With the Solidity tokenizer,
    /// special label tokens lex atomically; anything out of vocabulary maps
    /// to `<unk>`.
    pub fn encode(&self, text: &str, tokenizer: TokenSource) -> Vec<u32> {
        let texts: Vec<String> = match tokenizer {
            TokenSource::SolidityLexer => {
                let registry = self.label_registry();
                lexer::tokenize_solidity_with_labels(text, &registry)
                    .tokens
                    .into_iter()
                    .map(|t| t.text)
                    .collect()
            }
            TokenSource::Whitespace => lexer::tokenize_whitespace(text)
                .into_iter()
                .map(|t| t.text)
                .collect(),
        };
        texts
            .iter()
            .map(|t| self.id_of(t).unwrap_or(self.unk_id))
            .collect()
    }

    /// Concatenate the token texts for `ids`.
    pub fn decode(&self, ids: &[u32]) -> String {
        ids.iter().map(|&id| self.token(id)).collect()
    }
}

/// One logit per vocabulary entry. Masked entries are exactly negative
/// infinity so their softmax probability is exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitVector {
    pub values: Vec<f64>,
}

impl LogitVector {
    pub fn new(values: Vec<f64>) -> Self {
        LogitVector { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Numerically stable softmax; `-inf` entries come out as exact zeros.
    pub fn softmax(&self) -> Vec<f64> {
        let max = self
            .values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return vec![0.0; self.values.len()];
        }
        let exps: Vec<f64> = self.values.iter().map(|v| (v - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        exps.into_iter().map(|e| e / sum).collect()
    }

    /// Index of the largest logit; ties go to the lowest token id. `None`
    /// when every entry is masked.
    pub fn argmax(&self) -> Option<u32> {
        let mut best: Option<(usize, f64)> = None;
        for (i, &v) in self.values.iter().enumerate() {
            if v == f64::NEG_INFINITY {
                continue;
            }
            if best.is_none_or(|(_, bv)| v > bv) {
                best = Some((i, v));
            }
        }
        best.map(|(i, _)| i as u32)
    }
}

/// N-gram model configuration. `context_limit` is the number of context
/// tokens consulted at most; `embedding_dim` is carried as metadata for
/// neural backends and ignored by the n-gram backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmConfig {
    pub order_k: usize,
    pub smoothing_alpha: f64,
    /// One weight per order 1..=order_k, summing to 1.
    pub interpolation_lambdas: Vec<f64>,
    pub context_limit: usize,
    pub embedding_dim: Option<usize>,
    pub tokenizer: TokenSource,
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig {
            order_k: 4,
            smoothing_alpha: 0.1,
            interpolation_lambdas: vec![0.25; 4],
            context_limit: 512,
            embedding_dim: None,
            tokenizer: TokenSource::SolidityLexer,
        }
    }
}

impl LmConfig {
    pub fn ngram(order_k: usize) -> Self {
        LmConfig {
            order_k,
            interpolation_lambdas: vec![1.0 / order_k as f64; order_k],
            ..LmConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), LmError> {
        if self.order_k < 1 {
            return Err(LmError::InvalidConfig("order_k must be >= 1".into()));
        }
        if self.smoothing_alpha <= 0.0 {
            return Err(LmError::InvalidConfig(
                "smoothing_alpha must be > 0".into(),
            ));
        }
        if self.interpolation_lambdas.len() != self.order_k {
            return Err(LmError::InvalidConfig(format!(
                "need {} interpolation lambdas, got {}",
                self.order_k,
                self.interpolation_lambdas.len()
            )));
        }
        if self.interpolation_lambdas.iter().any(|l| *l < 0.0) {
            return Err(LmError::InvalidConfig(
                "interpolation lambdas must be non-negative".into(),
            ));
        }
        let sum: f64 = self.interpolation_lambdas.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(LmError::InvalidConfig(format!(
                "interpolation lambdas must sum to 1, got {sum}"
            )));
        }
        if self.context_limit < 1 {
            return Err(LmError::InvalidConfig("context_limit must be >= 1".into()));
        }
        Ok(())
    }
}

/// Training metadata reported alongside evaluation metrics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub tokens_seen: u64,
    pub epochs: u32,
}

/// Validation metrics: perplexity is exp(mean negative log-likelihood).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainStats {
    pub tokens_seen: u64,
    pub epochs: u32,
    pub validation_accuracy: f64,
    pub validation_perplexity: f64,
}

/// Next-token distribution contract: context ids in, one logit per
/// vocabulary entry out. Implementations must be deterministic.
pub trait LanguageModel {
    fn vocabulary(&self) -> &Vocabulary;
    fn next_token_logits(&self, context: &[u32]) -> LogitVector;
    fn context_limit(&self) -> usize;
    fn tokenizer(&self) -> TokenSource;
    fn training_meta(&self) -> TrainingMeta {
        TrainingMeta::default()
    }
}

/// Collect every token text in the corpus (under the chosen tokenizer) into a
/// vocabulary: reserved `<unk>`/`<eos>` first, then tokens by descending
/// frequency, ties lexicographic.
pub fn build_vocabulary(
    corpus: &[SourceFile],
    tokenizer: TokenSource,
) -> Result<Vocabulary, LmError> {
    if corpus.is_empty() {
        return Err(LmError::EmptyCorpus);
    }
    let mut counts: HashMap<String, u64> = HashMap::new();
    for file in corpus {
        let texts: Vec<String> = match tokenizer {
            TokenSource::SolidityLexer => lexer::tokenize_solidity(&file.text)
                .tokens
                .into_iter()
                .map(|t| t.text)
                .collect(),
            TokenSource::Whitespace => lexer::tokenize_whitespace(&file.text)
                .into_iter()
                .map(|t| t.text)
                .collect(),
        };
        for t in texts {
            *counts.entry(t).or_insert(0) += 1;
        }
    }
    let mut ordered: Vec<(String, u64)> = counts.into_iter().collect();
    ordered.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

    let mut vocab = Vocabulary::with_reserved();
    for (token, _) in ordered {
        if vocab.ids.contains_key(&token) {
            continue;
        }
        vocab.push(token, false);
    }
    Ok(vocab)
}

#[derive(Debug, Clone, Default)]
struct ContextCounts {
    next: HashMap<u32, u64>,
    total: u64,
}

/// Interpolated additive-smoothed n-gram model.
///
/// p(x | ctx) = sum over orders j of lambda_j * (c_j(ctx_j, x) + alpha) /
/// (c_j(ctx_j) + alpha * |V|), where ctx_j is the last j-1 context tokens.
/// Orders needing more context than is available are dropped and the
/// remaining lambdas renormalized, so an empty context yields the plain
/// unigram distribution.
#[derive(Debug, Clone)]
pub struct NgramLm {
    config: LmConfig,
    vocab: Vocabulary,
    // tables[j-1] maps a (j-1)-token context to its continuation counts
    tables: Vec<HashMap<Vec<u32>, ContextCounts>>,
    meta: TrainingMeta,
}

impl NgramLm {
    /// A model with no counts: every context is unseen, so every
    /// distribution is uniform. Serves as the random baseline.
    pub fn uniform(vocab: Vocabulary, config: LmConfig) -> Result<NgramLm, LmError> {
        config.validate()?;
        let tables = vec![HashMap::new(); config.order_k];
        Ok(NgramLm {
            config,
            vocab,
            tables,
            meta: TrainingMeta::default(),
        })
    }

    pub fn config(&self) -> &LmConfig {
        &self.config
    }

    fn mixture(&self, context: &[u32]) -> Vec<f64> {
        let v = self.vocab.len();
        let k = self.config.order_k;
        let window_start = context.len().saturating_sub(k.max(1) - 1);
        let window = &context[window_start..];

        // drop orders that need more context than we have, renormalize
        let usable: Vec<usize> = (1..=k).filter(|j| window.len() >= j - 1).collect();
        let lambda_sum: f64 = usable
            .iter()
            .map(|&j| self.config.interpolation_lambdas[j - 1])
            .sum();
        if lambda_sum <= 0.0 {
            return vec![1.0 / v as f64; v];
        }

        let alpha = self.config.smoothing_alpha;
        let mut probs = vec![0.0f64; v];
        for &j in &usable {
            let lambda = self.config.interpolation_lambdas[j - 1] / lambda_sum;
            if lambda == 0.0 {
                continue;
            }
            let ctx = &window[window.len() - (j - 1)..];
            let counts = self.tables[j - 1].get(ctx);
            let total = counts.map_or(0, |c| c.total);
            let denom = total as f64 + alpha * v as f64;
            for (x, p) in probs.iter_mut().enumerate() {
                let c = counts
                    .and_then(|cc| cc.next.get(&(x as u32)))
                    .copied()
                    .unwrap_or(0);
                *p += lambda * (c as f64 + alpha) / denom;
            }
        }
        probs
    }

    pub fn save(&self, path: &Path) -> Result<(), LmError> {
        let json = self.to_artifact_json();
        std::fs::write(path, json).map_err(|e| LmError::Io {
            path: path.display().to_string(),
            source: e,
        })
    }

    pub fn load(path: &Path) -> Result<NgramLm, LmError> {
        let json = std::fs::read_to_string(path).map_err(|e| LmError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        NgramLm::from_artifact_json(&json)
    }

    pub fn to_artifact_json(&self) -> String {
        let tables: Vec<BTreeMap<String, BTreeMap<u32, u64>>> = self
            .tables
            .iter()
            .map(|table| {
                table
                    .iter()
                    .map(|(ctx, counts)| {
                        let key = ctx
                            .iter()
                            .map(|id| id.to_string())
                            .collect::<Vec<_>>()
                            .join(" ");
                        let next: BTreeMap<u32, u64> =
                            counts.next.iter().map(|(k, v)| (*k, *v)).collect();
                        (key, next)
                    })
                    .collect()
            })
            .collect();
        let artifact = Artifact {
            version: ARTIFACT_VERSION,
            config: self.config.clone(),
            vocabulary: VocabData {
                tokens: self.vocab.tokens.clone(),
                special: self.vocab.special.iter().copied().collect(),
                unk_id: self.vocab.unk_id,
                eos_id: self.vocab.eos_id,
            },
            meta: self.meta,
            tables,
        };
        serde_json::to_string(&artifact).expect("artifact serializes")
    }

    pub fn from_artifact_json(json: &str) -> Result<NgramLm, LmError> {
        let artifact: Artifact = serde_json::from_str(json)?;
        if artifact.version != ARTIFACT_VERSION {
            return Err(LmError::IncompatibleArtifact {
                found: artifact.version,
                expected: ARTIFACT_VERSION,
            });
        }
        artifact.config.validate()?;
        let mut vocab = Vocabulary {
            tokens: artifact.vocabulary.tokens,
            ids: HashMap::new(),
            special: artifact.vocabulary.special.into_iter().collect(),
            unk_id: artifact.vocabulary.unk_id,
            eos_id: artifact.vocabulary.eos_id,
        };
        vocab.ids = vocab
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        let tables: Vec<HashMap<Vec<u32>, ContextCounts>> = artifact
            .tables
            .into_iter()
            .map(|table| {
                table
                    .into_iter()
                    .map(|(key, next)| {
                        let ctx: Vec<u32> = if key.is_empty() {
                            Vec::new()
                        } else {
                            key.split(' ').map(|s| s.parse().unwrap_or(0)).collect()
                        };
                        let total = next.values().sum();
                        let counts = ContextCounts {
                            next: next.into_iter().collect(),
                            total,
                        };
                        (ctx, counts)
                    })
                    .collect()
            })
            .collect();
        Ok(NgramLm {
            config: artifact.config,
            vocab,
            tables,
            meta: artifact.meta,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct VocabData {
    tokens: Vec<String>,
    special: Vec<u32>,
    unk_id: u32,
    eos_id: u32,
}

#[derive(Serialize, Deserialize)]
struct Artifact {
    version: u32,
    config: LmConfig,
    vocabulary: VocabData,
    meta: TrainingMeta,
    tables: Vec<BTreeMap<String, BTreeMap<u32, u64>>>,
}

impl LanguageModel for NgramLm {
    fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    fn next_token_logits(&self, context: &[u32]) -> LogitVector {
        LogitVector::new(self.mixture(context).into_iter().map(f64::ln).collect())
    }

    fn context_limit(&self) -> usize {
        self.config.context_limit
    }

    fn tokenizer(&self) -> TokenSource {
        self.config.tokenizer
    }

    fn training_meta(&self) -> TrainingMeta {
        self.meta
    }
}

/// Accumulate n-gram counts over every corpus file (with an `<eos>`
/// terminator per file). For this count-based backend extra epochs change
/// nothing; the epoch count is recorded as metadata only.
pub fn train_clm(
    corpus: &[SourceFile],
    vocab: &Vocabulary,
    config: &LmConfig,
    epochs: u32,
) -> Result<NgramLm, LmError> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(LmError::EmptyCorpus);
    }
    let mut tables: Vec<HashMap<Vec<u32>, ContextCounts>> =
        vec![HashMap::new(); config.order_k];
    let mut tokens_seen = 0u64;
    for file in corpus {
        let mut ids = vocab.encode(&file.text, config.tokenizer);
        ids.push(vocab.eos_id());
        tokens_seen += ids.len() as u64;
        for t in 0..ids.len() {
            let target = ids[t];
            for j in 1..=config.order_k {
                let need = j - 1;
                if t < need {
                    continue;
                }
                let ctx = ids[t - need..t].to_vec();
                let entry = tables[j - 1].entry(ctx).or_default();
                *entry.next.entry(target).or_insert(0) += 1;
                entry.total += 1;
            }
        }
    }
    Ok(NgramLm {
        config: config.clone(),
        vocab: vocab.clone(),
        tables,
        meta: TrainingMeta {
            tokens_seen,
            epochs,
        },
    })
}

/// Next-token accuracy (argmax match) and perplexity over every position of
/// the held-out files, `<eos>` included.
pub fn evaluate(model: &dyn LanguageModel, held_out: &[SourceFile]) -> Result<TrainStats, LmError> {
    if held_out.is_empty() {
        return Err(LmError::EmptyCorpus);
    }
    let vocab = model.vocabulary();
    let mut positions = 0u64;
    let mut correct = 0u64;
    let mut nll_sum = 0.0f64;
    for file in held_out {
        let mut ids = vocab.encode(&file.text, model.tokenizer());
        ids.push(vocab.eos_id());
        for t in 0..ids.len() {
            let start = t.saturating_sub(model.context_limit());
            let logits = model.next_token_logits(&ids[start..t]);
            let probs = logits.softmax();
            let target = ids[t] as usize;
            positions += 1;
            if logits.argmax() == Some(ids[t]) {
                correct += 1;
            }
            let p = probs[target].max(f64::MIN_POSITIVE);
            nll_sum += -p.ln();
        }
    }
    let meta = model.training_meta();
    Ok(TrainStats {
        tokens_seen: meta.tokens_seen,
        epochs: meta.epochs,
        validation_accuracy: correct as f64 / positions as f64,
        validation_perplexity: (nll_sum / positions as f64).exp(),
    })
}

/// Hand-built lookup model for tests and worked examples: a default
/// distribution plus (context-suffix -> distribution) rules, first match
/// wins.
#[derive(Debug, Clone)]
pub struct TableLm {
    vocab: Vocabulary,
    tokenizer: TokenSource,
    default_probs: Vec<f64>,
    rules: Vec<(Vec<u32>, Vec<f64>)>,
}

impl TableLm {
    pub fn new(vocab: Vocabulary, default_probs: Vec<f64>) -> TableLm {
        assert_eq!(default_probs.len(), vocab.len());
        TableLm {
            vocab,
            tokenizer: TokenSource::Whitespace,
            default_probs,
            rules: Vec::new(),
        }
    }

    /// Use `probs` whenever the context ends with `suffix`.
    pub fn with_rule(mut self, suffix: Vec<u32>, probs: Vec<f64>) -> TableLm {
        assert_eq!(probs.len(), self.vocab.len());
        self.rules.push((suffix, probs));
        self
    }
}

impl LanguageModel for TableLm {
    fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    fn next_token_logits(&self, context: &[u32]) -> LogitVector {
        let probs = self
            .rules
            .iter()
            .find(|(suffix, _)| context.ends_with(suffix))
            .map(|(_, p)| p)
            .unwrap_or(&self.default_probs);
        LogitVector::new(probs.iter().map(|p| p.ln()).collect())
    }

    fn context_limit(&self) -> usize {
        64
    }

    fn tokenizer(&self) -> TokenSource {
        self.tokenizer
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Origin;

    fn file(text: &str) -> SourceFile {
        SourceFile {
            address: "synthetic:lm".into(),
            file_name: "lm.sol".into(),
            text: text.into(),
            origin: Origin::Synthetic,
        }
    }

    #[test]
    fn vocabulary_from_small_corpus() {
        let vocab = build_vocabulary(&[file("a b a")], TokenSource::Whitespace).unwrap();
        // {<unk>, <eos>, a, b} plus the single-space whitespace token
        assert_eq!(vocab.len(), 5);
        assert_eq!(vocab.token(0), UNK_TOKEN);
        assert_eq!(vocab.token(1), EOS_TOKEN);
        assert!(vocab.id_of("a").unwrap() < vocab.id_of("b").unwrap());
        assert!(build_vocabulary(&[], TokenSource::Whitespace).is_err());
    }

    #[test]
    fn vocabulary_is_deterministic() {
        let corpus = [file("contract A { uint x; }"), file("contract B { uint y; }")];
        let a = build_vocabulary(&corpus, TokenSource::SolidityLexer).unwrap();
        let b = build_vocabulary(&corpus, TokenSource::SolidityLexer).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn vocabulary_size_matches_distinct_tokens() {
        let out = crate::corpus::generate_synthetic_corpus(&crate::corpus::SynthSpec {
            n_functions: 100,
            vuln_fraction: 0.0,
            vuln_types: vec![],
            seed: 5,
        })
        .unwrap();
        let vocab = build_vocabulary(&out.files, TokenSource::SolidityLexer).unwrap();
        // oracle: set of token texts
        let mut distinct = std::collections::BTreeSet::new();
        for f in &out.files {
            for t in lexer::tokenize_solidity(&f.text).tokens {
                distinct.insert(t.text);
            }
        }
        assert_eq!(vocab.len(), distinct.len() + 2);
    }

    #[test]
    fn special_token_extension_is_atomic_and_idempotent() {
        let mut vocab = build_vocabulary(&[file("x y")], TokenSource::SolidityLexer).unwrap();
        let before = vocab.len();
        let warnings =
            vocab.extend_with_special_tokens(&[VulnType::IntegerOverflowUnderflow]);
        assert!(warnings.is_empty());
        assert_eq!(vocab.len(), before + 1);

        let ids = vocab.encode("<IOU>x", TokenSource::SolidityLexer);
        assert_eq!(ids.len(), 2);
        assert_eq!(vocab.token(ids[0]), "<IOU>");
        assert_eq!(vocab.token(ids[1]), "x");

        let warnings = vocab.extend_with_special_tokens(&VulnType::ALL);
        assert_eq!(warnings.len(), 1, "IOU is already present");
        assert_eq!(vocab.len(), before + 10);

        let again = vocab.clone();
        let warnings = vocab.extend_with_special_tokens(&VulnType::ALL);
        assert_eq!(warnings.len(), 10);
        assert_eq!(vocab, again);
    }

    #[test]
    fn unlabeled_vocabulary_fragments_labels() {
        let vocab = build_vocabulary(&[file("<IOU>x")], TokenSource::SolidityLexer).unwrap();
        assert!(vocab.id_of("<IOU>").is_none());
        assert!(vocab.id_of("<").is_some());
        assert!(vocab.id_of("IOU").is_some());
    }

    fn bigram_model(text: &str, alpha: f64) -> NgramLm {
        let corpus = [file(text)];
        let vocab = build_vocabulary(&corpus, TokenSource::Whitespace).unwrap();
        let config = LmConfig {
            order_k: 2,
            smoothing_alpha: alpha,
            interpolation_lambdas: vec![0.0, 1.0],
            tokenizer: TokenSource::Whitespace,
            ..LmConfig::default()
        };
        train_clm(&corpus, &vocab, &config, 1).unwrap()
    }

    #[test]
    fn bigram_hand_count() {
        // context "a" is seen twice, both followed by the space token, and
        // each space is followed by a letter; check p(b | [a, " "]) ~ 1
        let model = bigram_model("a b a b", 1e-12);
        let vocab = model.vocabulary().clone();
        let a = vocab.id_of("a").unwrap();
        let b = vocab.id_of("b").unwrap();
        let ws = vocab.id_of(" ").unwrap();
        let probs = model.next_token_logits(&[a]).softmax();
        assert!((probs[ws as usize] - 1.0).abs() < 1e-6);
        let probs = model.next_token_logits(&[a, ws]).softmax();
        assert!((probs[b as usize] - 1.0).abs() < 1e-6);
        assert_eq!(model.next_token_logits(&[a, ws]).argmax(), Some(b));
    }

    #[test]
    fn logits_normalize() {
        let model = bigram_model("a b a b c d e", 0.1);
        for ctx in [vec![], vec![2], vec![3, 4], vec![4, 2, 3]] {
            let sum: f64 = model.next_token_logits(&ctx).softmax().iter().sum();
            assert!((sum - 1.0).abs() < 1e-9, "sum {sum} for ctx {ctx:?}");
        }
    }

    #[test]
    fn training_is_deterministic() {
        let corpus = [file("a b c a b c"), file("b c d")];
        let vocab = build_vocabulary(&corpus, TokenSource::Whitespace).unwrap();
        let cfg = LmConfig {
            tokenizer: TokenSource::Whitespace,
            ..LmConfig::default()
        };
        let m1 = train_clm(&corpus, &vocab, &cfg, 2).unwrap();
        let m2 = train_clm(&corpus, &vocab, &cfg, 2).unwrap();
        for ctx in [vec![], vec![2], vec![2, 3]] {
            assert_eq!(
                m1.next_token_logits(&ctx).values,
                m2.next_token_logits(&ctx).values
            );
        }
    }

    #[test]
    fn empty_context_is_pure_unigram() {
        let corpus = [file("a b a b a")];
        let vocab = build_vocabulary(&corpus, TokenSource::Whitespace).unwrap();
        let four = train_clm(
            &corpus,
            &vocab,
            &LmConfig {
                tokenizer: TokenSource::Whitespace,
                ..LmConfig::ngram(4)
            },
            1,
        )
        .unwrap();
        let uni = train_clm(
            &corpus,
            &vocab,
            &LmConfig {
                tokenizer: TokenSource::Whitespace,
                ..LmConfig::ngram(1)
            },
            1,
        )
        .unwrap();
        assert_eq!(
            four.next_token_logits(&[]).values,
            uni.next_token_logits(&[]).values
        );
    }

    #[test]
    fn one_hot_unigram_lambda_matches_standalone_unigram() {
        let corpus = [file("x y z x y")];
        let vocab = build_vocabulary(&corpus, TokenSource::Whitespace).unwrap();
        let cfg4 = LmConfig {
            order_k: 4,
            interpolation_lambdas: vec![1.0, 0.0, 0.0, 0.0],
            tokenizer: TokenSource::Whitespace,
            ..LmConfig::default()
        };
        let cfg1 = LmConfig {
            tokenizer: TokenSource::Whitespace,
            ..LmConfig::ngram(1)
        };
        let backed = train_clm(&corpus, &vocab, &cfg4, 1).unwrap();
        let standalone = train_clm(&corpus, &vocab, &cfg1, 1).unwrap();
        let x = vocab.id_of("x").unwrap();
        let ws = vocab.id_of(" ").unwrap();
        for ctx in [vec![], vec![x], vec![x, ws], vec![ws, x, ws]] {
            assert_eq!(
                backed.next_token_logits(&ctx).values,
                standalone.next_token_logits(&ctx).values
            );
        }
    }

    #[test]
    fn unseen_context_stays_finite() {
        let model = bigram_model("a b", 0.1);
        let unk = model.vocabulary().unk_id();
        let logits = model.next_token_logits(&[unk, unk, unk]);
        assert!(logits.values.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn uniform_model_perplexity_equals_vocab_size() {
        let corpus = [file("a b c d")];
        let vocab = build_vocabulary(&corpus, TokenSource::Whitespace).unwrap();
        let n = vocab.len() as f64;
        let cfg = LmConfig {
            tokenizer: TokenSource::Whitespace,
            ..LmConfig::default()
        };
        let model = NgramLm::uniform(vocab, cfg).unwrap();
        let stats = evaluate(&model, &corpus).unwrap();
        assert!((stats.validation_perplexity - n).abs() < 1e-9);
    }

    #[test]
    fn higher_order_beats_unigram_on_templated_corpus() {
        let out = crate::corpus::generate_synthetic_corpus(&crate::corpus::SynthSpec {
            n_functions: 120,
            vuln_fraction: 0.0,
            vuln_types: vec![],
            seed: 9,
        })
        .unwrap();
        let (train, held): (Vec<_>, Vec<_>) =
            out.files.iter().cloned().enumerate().partition(|(i, _)| i % 6 != 0);
        let train: Vec<SourceFile> = train.into_iter().map(|(_, f)| f).collect();
        let held: Vec<SourceFile> = held.into_iter().map(|(_, f)| f).collect();
        let vocab = build_vocabulary(&train, TokenSource::SolidityLexer).unwrap();
        let four = train_clm(&train, &vocab, &LmConfig::ngram(4), 1).unwrap();
        let uni = train_clm(&train, &vocab, &LmConfig::ngram(1), 1).unwrap();
        let ppl4 = evaluate(&four, &held).unwrap().validation_perplexity;
        let ppl1 = evaluate(&uni, &held).unwrap().validation_perplexity;
        assert!(
            ppl4 < ppl1,
            "4-gram perplexity {ppl4} should beat unigram {ppl1}"
        );
    }

    #[test]
    fn artifact_round_trip_preserves_logits() {
        let corpus = [file("a b c a b"), file("c b a")];
        let vocab = build_vocabulary(&corpus, TokenSource::Whitespace).unwrap();
        let cfg = LmConfig {
            tokenizer: TokenSource::Whitespace,
            ..LmConfig::default()
        };
        let model = train_clm(&corpus, &vocab, &cfg, 2).unwrap();
        let json = model.to_artifact_json();
        let loaded = NgramLm::from_artifact_json(&json).unwrap();
        for ctx in [vec![], vec![2], vec![3, 2], vec![2, 3, 4]] {
            assert_eq!(
                model.next_token_logits(&ctx).values,
                loaded.next_token_logits(&ctx).values
            );
        }
        assert_eq!(loaded.training_meta().epochs, 2);
    }

    #[test]
    fn artifact_version_is_checked() {
        let corpus = [file("a")];
        let vocab = build_vocabulary(&corpus, TokenSource::Whitespace).unwrap();
        let cfg = LmConfig {
            tokenizer: TokenSource::Whitespace,
            ..LmConfig::default()
        };
        let model = train_clm(&corpus, &vocab, &cfg, 1).unwrap();
        let json = model.to_artifact_json().replace("\"version\":1", "\"version\":99");
        match NgramLm::from_artifact_json(&json) {
            Err(LmError::IncompatibleArtifact { found: 99, .. }) => {}
            other => panic!("expected version error, got {other:?}"),
        }
    }
}
