//! Contract-corpus handling: ingestion, inflation of flattened files,
//! token-set Jaccard deduplication, deterministic splits, and JSONL IO.

mod etherscan;
mod synth;

pub use etherscan::{fetch_verified_source, Backend, ClientConfig};
pub use synth::{generate_synthetic_corpus, SynthOutcome, SynthSpec};

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::labeling::VulnType;
use crate::lexer::{self, TokenKind};

/// Where a source file came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Local,
    Remote,
    Inflated,
    Synthetic,
}

/// One contract source unit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceFile {
    /// 40-hex-char address, or `local:<name>` / `synthetic:<id>`.
    pub address: String,
    pub file_name: String,
    pub text: String,
    pub origin: Origin,
}

pub fn is_hex40(s: &str) -> bool {
    s.len() == 40 && s.bytes().all(|b| b.is_ascii_hexdigit())
}

impl SourceFile {
    pub fn new(
        address: impl Into<String>,
        file_name: impl Into<String>,
        text: impl Into<String>,
        origin: Origin,
    ) -> Result<SourceFile, CorpusError> {
        let file = SourceFile {
            address: address.into(),
            file_name: file_name.into(),
            text: text.into(),
            origin,
        };
        file.validate()?;
        Ok(file)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.text.is_empty() {
            return Err(CorpusError::EmptyText {
                file_name: self.file_name.clone(),
            });
        }
        let ok = match self.origin {
            Origin::Remote => is_hex40(&self.address),
            Origin::Local | Origin::Inflated => {
                is_hex40(&self.address) || self.address.starts_with("local:")
            }
            Origin::Synthetic => self.address.starts_with("synthetic:"),
        };
        if !ok {
            return Err(CorpusError::InvalidAddress {
                address: self.address.clone(),
            });
        }
        Ok(())
    }
}

/// Ground-truth (or transferred) vulnerability location in a corpus file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub address: String,
    pub file_name: String,
    pub vuln_type: VulnType,
    /// 1-based line.
    pub line: usize,
}

/// A label already applied to (or to be applied to) one line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelEntry {
    #[serde(rename = "type")]
    pub vuln_type: VulnType,
    pub line: usize,
}

/// Corpus record extended with its injected labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledRecord {
    pub address: String,
    pub file_name: String,
    pub text: String,
    pub origin: Origin,
    pub labels: Vec<LabelEntry>,
}

impl LabeledRecord {
    pub fn source_file(&self) -> SourceFile {
        SourceFile {
            address: self.address.clone(),
            file_name: self.file_name.clone(),
            text: self.text.clone(),
            origin: self.origin,
        }
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed JSONL record: {source}")]
    MalformedJsonl {
        path: String,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("source file {file_name} has empty text")]
    EmptyText { file_name: String },
    #[error("invalid address `{address}`")]
    InvalidAddress { address: String },
    #[error("contract source for {address} not found or not verified")]
    NotFound { address: String },
    #[error("rate limited after {attempts} attempts; retry after {backoff_hint:?}")]
    RateLimited {
        attempts: u32,
        backoff_hint: Duration,
    },
    #[error("http error fetching {address}: {message}")]
    Http { address: String, message: String },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("corpus is empty")]
    EmptyCorpus,
}

/// Which tokenizer feeds the Jaccard token sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenSource {
    SolidityLexer,
    Whitespace,
}

/// Near-duplicate filtering parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DedupConfig {
    /// Drop a file when its similarity to an already-kept file is strictly
    /// greater than this.
    pub similarity_threshold: f64,
    pub group_by_file_name: bool,
    pub token_source: TokenSource,
}

impl Default for DedupConfig {
    fn default() -> Self {
        DedupConfig {
            similarity_threshold: 0.9,
            group_by_file_name: true,
            token_source: TokenSource::SolidityLexer,
        }
    }
}

/// Train/validation/test fractions plus the shuffling seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub validation_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train: f64, validation: f64, test: f64, seed: u64) -> Self {
        SplitSpec {
            train_fraction: train,
            validation_fraction: validation,
            test_fraction: test,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let fractions = [
            self.train_fraction,
            self.validation_fraction,
            self.test_fraction,
        ];
        if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(CorpusError::InvalidConfig(
                "split fractions must lie in [0, 1]".into(),
            ));
        }
        let sum: f64 = fractions.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(CorpusError::InvalidConfig(format!(
                "split fractions must sum to 1, got {sum}"
            )));
        }
        Ok(())
    }
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec::new(0.8, 0.1, 0.1, 0)
    }
}

#[derive(Debug, Default)]
pub struct IngestOutcome {
    pub files: Vec<SourceFile>,
    pub warnings: Vec<String>,
}

/// Read every `.sol` file under `path` (non-recursive). File names matching
/// `<hex40>_<name>.sol` (with or without `0x`) carry their address; all
/// others get `local:<stem>`. Unreadable files are warnings, not errors.
pub fn ingest_directory(path: &Path) -> Result<IngestOutcome, CorpusError> {
    let mut entries: Vec<_> = fs::read_dir(path)
        .map_err(|e| CorpusError::Io {
            path: path.display().to_string(),
            source: e,
        })?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|ext| ext == "sol"))
        .collect();
    entries.sort();

    let mut out = IngestOutcome::default();
    for file_path in entries {
        let name = file_path
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or_default()
            .to_string();
        match fs::read_to_string(&file_path) {
            Ok(text) if text.is_empty() => {
                out.warnings.push(format!("skipping empty file {name}"));
            }
            Ok(text) => {
                let address = address_from_file_name(&name);
                out.files.push(SourceFile {
                    address,
                    file_name: name,
                    text,
                    origin: Origin::Local,
                });
            }
            Err(e) => out.warnings.push(format!("cannot read {name}: {e}")),
        }
    }
    Ok(out)
}

fn address_from_file_name(name: &str) -> String {
    let stem = name.strip_suffix(".sol").unwrap_or(name);
    if let Some((prefix, _rest)) = stem.split_once('_') {
        let hex = prefix.strip_prefix("0x").unwrap_or(prefix);
        if is_hex40(hex) {
            return hex.to_ascii_lowercase();
        }
    }
    format!("local:{stem}")
}

#[derive(Debug, Default)]
pub struct InflateOutcome {
    pub files: Vec<SourceFile>,
    pub warnings: Vec<String>,
}

/// Split a flattened source into one file per top-level contract, library, or
/// interface declaration. Every output is prefixed with the parent's header
/// (everything before the first declaration: license, pragma, imports) so it
/// lexes standalone. With no top-level declarations the input is passed
/// through unchanged with a warning.
pub fn inflate(file: &SourceFile) -> InflateOutcome {
    let text = &file.text;
    let tokens = lexer::tokenize_solidity(text).tokens;

    struct Decl {
        start: usize,
        end: usize,
        name: String,
    }
    let mut decls: Vec<Decl> = Vec::new();
    let mut depth = 0usize;
    let mut i = 0;
    while i < tokens.len() {
        let tok = &tokens[i];
        match (tok.kind, tok.text.as_str()) {
            (TokenKind::Punctuation, "{") => depth += 1,
            (TokenKind::Punctuation, "}") => depth = depth.saturating_sub(1),
            (TokenKind::Keyword, "contract" | "library" | "interface") if depth == 0 => {
                // pull a preceding `abstract` into the declaration
                let mut start = tok.byte_offset;
                if let Some(prev) = tokens[..i]
                    .iter()
                    .rev()
                    .find(|t| t.kind != TokenKind::Whitespace)
                {
                    if prev.kind == TokenKind::Keyword && prev.text == "abstract" {
                        start = prev.byte_offset;
                    }
                }
                let name = tokens[i + 1..]
                    .iter()
                    .find(|t| {
                        matches!(t.kind, TokenKind::Identifier | TokenKind::Keyword)
                    })
                    .map(|t| t.text.clone())
                    .unwrap_or_else(|| "Unnamed".to_string());
                // advance to the matching close brace of the declaration body
                let mut j = i + 1;
                let mut body_depth = 0usize;
                let mut end = text.len();
                let mut opened = false;
                while j < tokens.len() {
                    match (tokens[j].kind, tokens[j].text.as_str()) {
                        (TokenKind::Punctuation, "{") => {
                            body_depth += 1;
                            opened = true;
                        }
                        (TokenKind::Punctuation, "}") => {
                            body_depth -= 1;
                            if body_depth == 0 {
                                end = tokens[j].byte_offset + 1;
                                break;
                            }
                        }
                        _ => {}
                    }
                    j += 1;
                }
                if !opened {
                    end = text.len();
                    j = tokens.len();
                }
                decls.push(Decl { start, end, name });
                i = j;
            }
            _ => {}
        }
        i += 1;
    }

    if decls.is_empty() {
        return InflateOutcome {
            files: vec![file.clone()],
            warnings: vec![format!(
                "{}: no top-level declarations found, passing through",
                file.file_name
            )],
        };
    }

    let header = &text[..decls[0].start];
    let mut name_counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut files = Vec::with_capacity(decls.len());
    for d in &decls {
        let count = name_counts.entry(d.name.clone()).or_insert(0);
        *count += 1;
        let file_name = if *count == 1 {
            format!("{}.sol", d.name)
        } else {
            format!("{}_{}.sol", d.name, count)
        };
        let mut body = String::with_capacity(header.len() + (d.end - d.start) + 1);
        body.push_str(header);
        body.push_str(&text[d.start..d.end]);
        if !body.ends_with('\n') {
            body.push('\n');
        }
        files.push(SourceFile {
            address: file.address.clone(),
            file_name,
            text: body,
            origin: Origin::Inflated,
        });
    }
    InflateOutcome {
        files,
        warnings: Vec::new(),
    }
}

/// Distinct non-whitespace, non-comment token texts of a file.
pub fn token_set(text: &str, source: TokenSource) -> BTreeSet<String> {
    match source {
        TokenSource::SolidityLexer => lexer::tokenize_solidity(text)
            .tokens
            .into_iter()
            .filter(|t| !matches!(t.kind, TokenKind::Whitespace | TokenKind::Comment))
            .map(|t| t.text)
            .collect(),
        TokenSource::Whitespace => lexer::tokenize_whitespace(text)
            .into_iter()
            .filter(|t| t.kind != TokenKind::Whitespace)
            .map(|t| t.text)
            .collect(),
    }
}

/// Jaccard index over token-type sets. Two files with empty token sets are
/// identical by convention (1.0).
pub fn jaccard_similarity(a: &SourceFile, b: &SourceFile, cfg: &DedupConfig) -> f64 {
    let sa = token_set(&a.text, cfg.token_source);
    let sb = token_set(&b.text, cfg.token_source);
    jaccard_of_sets(&sa, &sb)
}

fn jaccard_of_sets(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let intersection = a.intersection(b).count();
    let union = a.len() + b.len() - intersection;
    intersection as f64 / union as f64
}

#[derive(Debug)]
pub struct DedupOutcome {
    pub kept: Vec<SourceFile>,
    pub dropped_count: usize,
}

/// Greedy near-duplicate filter. Files are ordered by (file_name, address)
/// for determinism, then scanned in order within each file-name group (or
/// globally); a candidate is dropped iff its Jaccard similarity to any
/// already-kept file of its group strictly exceeds the threshold.
pub fn deduplicate(files: &[SourceFile], cfg: &DedupConfig) -> Result<DedupOutcome, CorpusError> {
    if !(0.0..=1.0).contains(&cfg.similarity_threshold) {
        return Err(CorpusError::InvalidConfig(format!(
            "similarity_threshold must lie in [0, 1], got {}",
            cfg.similarity_threshold
        )));
    }
    let mut ordered: Vec<&SourceFile> = files.iter().collect();
    ordered.sort_by(|a, b| {
        a.file_name
            .cmp(&b.file_name)
            .then_with(|| a.address.cmp(&b.address))
    });

    let mut kept_sets: BTreeMap<&str, Vec<BTreeSet<String>>> = BTreeMap::new();
    let mut kept = Vec::new();
    for file in ordered {
        let group_key = if cfg.group_by_file_name {
            file.file_name.as_str()
        } else {
            ""
        };
        let set = token_set(&file.text, cfg.token_source);
        let group = kept_sets.entry(group_key).or_default();
        let duplicate = group
            .iter()
            .any(|k| jaccard_of_sets(k, &set) > cfg.similarity_threshold);
        if !duplicate {
            group.push(set);
            kept.push(file.clone());
        }
    }
    let dropped_count = files.len() - kept.len();
    Ok(DedupOutcome {
        kept,
        dropped_count,
    })
}

#[derive(Debug, Default)]
pub struct DatasetSplit {
    pub train: Vec<SourceFile>,
    pub validation: Vec<SourceFile>,
    pub test: Vec<SourceFile>,
}

fn stable_hash(address: &str, file_name: &str, seed: u64) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(address.as_bytes());
    hasher.update([0x1f]);
    hasher.update(file_name.as_bytes());
    hasher.update([0x1f]);
    hasher.update(seed.to_le_bytes());
    let digest = hasher.finalize();
    u64::from_be_bytes(digest[..8].try_into().unwrap())
}

/// Deterministic split: files are ordered by a stable hash of
/// (address, file_name, seed), then partitioned train/validation/test with
/// floor-based sizes, remainder to train.
pub fn split_dataset(files: &[SourceFile], spec: &SplitSpec) -> Result<DatasetSplit, CorpusError> {
    spec.validate()?;
    let mut ordered: Vec<&SourceFile> = files.iter().collect();
    ordered.sort_by_key(|f| {
        (
            stable_hash(&f.address, &f.file_name, spec.seed),
            f.address.clone(),
            f.file_name.clone(),
        )
    });

    let n = ordered.len();
    let n_val = (n as f64 * spec.validation_fraction).floor() as usize;
    let n_test = (n as f64 * spec.test_fraction).floor() as usize;
    let n_train = n - n_val - n_test;

    let mut split = DatasetSplit::default();
    for (i, f) in ordered.into_iter().enumerate() {
        if i < n_train {
            split.train.push(f.clone());
        } else if i < n_train + n_val {
            split.validation.push(f.clone());
        } else {
            split.test.push(f.clone());
        }
    }
    Ok(split)
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, CorpusError> {
    let file = fs::File::open(path).map_err(|e| CorpusError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CorpusError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| CorpusError::MalformedJsonl {
            path: path.display().to_string(),
            line: i + 1,
            source: e,
        })?;
        out.push(record);
    }
    Ok(out)
}

fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<(), CorpusError> {
    let io_err = |e| CorpusError::Io {
        path: path.display().to_string(),
        source: e,
    };
    let mut file = fs::File::create(path).map_err(io_err)?;
    for r in records {
        let line = serde_json::to_string(r).expect("record serializes");
        file.write_all(line.as_bytes()).map_err(io_err)?;
        file.write_all(b"\n").map_err(io_err)?;
    }
    Ok(())
}

pub fn read_corpus_jsonl(path: &Path) -> Result<Vec<SourceFile>, CorpusError> {
    read_jsonl(path)
}

pub fn write_corpus_jsonl(path: &Path, files: &[SourceFile]) -> Result<(), CorpusError> {
    write_jsonl(path, files)
}

pub fn read_annotations_jsonl(path: &Path) -> Result<Vec<Annotation>, CorpusError> {
    read_jsonl(path)
}

pub fn write_annotations_jsonl(path: &Path, annotations: &[Annotation]) -> Result<(), CorpusError> {
    write_jsonl(path, annotations)
}

pub fn read_labeled_jsonl(path: &Path) -> Result<Vec<LabeledRecord>, CorpusError> {
    read_jsonl(path)
}

pub fn write_labeled_jsonl(path: &Path, records: &[LabeledRecord]) -> Result<(), CorpusError> {
    write_jsonl(path, records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn local(file_name: &str, text: &str) -> SourceFile {
        SourceFile {
            address: format!("local:{file_name}"),
            file_name: file_name.to_string(),
            text: text.to_string(),
            origin: Origin::Local,
        }
    }

    #[test]
    fn ingest_reads_sol_files() {
        let dir = tempfile::tempdir().unwrap();
        for (name, body) in [
            ("A.sol", "contract A {}\n"),
            ("B.sol", "contract B {}\n"),
            (
                "0x1234567890abcdef1234567890abcdef12345678_Coin.sol",
                "contract Coin {}\n",
            ),
            ("notes.txt", "not solidity"),
        ] {
            fs::write(dir.path().join(name), body).unwrap();
        }
        let out = ingest_directory(dir.path()).unwrap();
        assert_eq!(out.files.len(), 3);
        let coin = out
            .files
            .iter()
            .find(|f| f.file_name.ends_with("Coin.sol"))
            .unwrap();
        assert_eq!(coin.address, "1234567890abcdef1234567890abcdef12345678");
        assert!(out.files.iter().any(|f| f.address == "local:A"));
    }

    #[test]
    fn ingest_empty_directory() {
        let dir = tempfile::tempdir().unwrap();
        let out = ingest_directory(dir.path()).unwrap();
        assert!(out.files.is_empty());
    }

    #[test]
    fn inflate_splits_top_level_declarations() {
        let file = local(
            "Flat.sol",
            "// SPDX-License-Identifier: MIT\npragma solidity ^0.4.24;\n\ncontract A { uint x; }\nlibrary B { function f() internal {} }\n",
        );
        let out = inflate(&file);
        assert_eq!(out.files.len(), 2);
        assert_eq!(out.files[0].file_name, "A.sol");
        assert_eq!(out.files[1].file_name, "B.sol");
        for f in &out.files {
            assert!(f.text.starts_with("// SPDX-License-Identifier: MIT\n"));
            assert!(f.text.contains("pragma solidity"));
            assert_eq!(f.origin, Origin::Inflated);
        }
        assert!(out.files[0].text.contains("contract A { uint x; }"));
        assert!(!out.files[0].text.contains("library B"));
    }

    #[test]
    fn inflate_single_contract_keeps_body() {
        let file = local("One.sol", "contract Only { uint a; }\n");
        let out = inflate(&file);
        assert_eq!(out.files.len(), 1);
        assert!(out.files[0].text.contains("contract Only { uint a; }"));
    }

    #[test]
    fn inflate_disambiguates_duplicate_names() {
        let text = "contract A {} contract B {} contract A {} interface C {} library B {}\n";
        let out = inflate(&local("Flat.sol", text));
        let names: Vec<&str> = out.files.iter().map(|f| f.file_name.as_str()).collect();
        assert_eq!(names, vec!["A.sol", "B.sol", "A_2.sol", "C.sol", "B_2.sol"]);
        // oracle: count of top-level declaration keywords
        let keyword_count = lexer::tokenize_solidity(text)
            .tokens
            .iter()
            .filter(|t| {
                t.kind == TokenKind::Keyword
                    && matches!(t.text.as_str(), "contract" | "library" | "interface")
            })
            .count();
        assert_eq!(out.files.len(), keyword_count);
    }

    #[test]
    fn inflate_without_declarations_passes_through() {
        let file = local("Empty.sol", "pragma solidity ^0.4.24;\n");
        let out = inflate(&file);
        assert_eq!(out.files.len(), 1);
        assert_eq!(out.files[0].text, file.text);
        assert_eq!(out.warnings.len(), 1);
    }

    #[test]
    fn inflate_ignores_braces_in_strings_and_comments() {
        let text = "contract A { string s = \"}\"; // }\n}\ncontract B {}\n";
        let out = inflate(&local("Flat.sol", text));
        assert_eq!(out.files.len(), 2);
    }

    #[test]
    fn jaccard_identical_files() {
        let cfg = DedupConfig::default();
        let a = local("A.sol", "contract A { uint x; }");
        assert_eq!(jaccard_similarity(&a, &a, &cfg), 1.0);
    }

    #[test]
    fn jaccard_half_overlap() {
        let cfg = DedupConfig {
            token_source: TokenSource::Whitespace,
            ..DedupConfig::default()
        };
        let a = local("A.sol", "a b c");
        let b = local("B.sol", "a b d");
        // {a,b,c} vs {a,b,d}: 2 shared of 4 total
        assert_eq!(jaccard_similarity(&a, &b, &cfg), 0.5);
        assert_eq!(
            jaccard_similarity(&a, &b, &cfg),
            jaccard_similarity(&b, &a, &cfg)
        );
    }

    #[test]
    fn jaccard_on_constructed_token_sets() {
        // 45 shared token types out of 55 distinct: J = 45/55
        let shared: Vec<String> = (0..45).map(|i| format!("s{i}")).collect();
        let only_a: Vec<String> = (0..5).map(|i| format!("a{i}")).collect();
        let only_b: Vec<String> = (0..5).map(|i| format!("b{i}")).collect();
        let text_a = format!("{} {}", shared.join(" "), only_a.join(" "));
        let text_b = format!("{} {}", shared.join(" "), only_b.join(" "));
        let cfg = DedupConfig {
            token_source: TokenSource::Whitespace,
            ..DedupConfig::default()
        };
        let sim = jaccard_similarity(&local("A.sol", &text_a), &local("B.sol", &text_b), &cfg);
        assert!((sim - 45.0 / 55.0).abs() < 1e-12);
    }

    #[test]
    fn dedup_keeps_one_of_identical_files() {
        let files = vec![
            local("A.sol", "contract A { uint x; }"),
            local("B.sol", "contract A { uint x; }"),
            local("C.sol", "contract A { uint x; }"),
        ];
        let out = deduplicate(&files, &DedupConfig {
            group_by_file_name: false,
            ..DedupConfig::default()
        })
        .unwrap();
        assert_eq!(out.kept.len(), 1);
        assert_eq!(out.dropped_count, 2);
    }

    #[test]
    fn dedup_keeps_dissimilar_files() {
        let files = vec![local("A.sol", "a b c d"), local("B.sol", "a b e f")];
        let cfg = DedupConfig {
            group_by_file_name: false,
            token_source: TokenSource::Whitespace,
            ..DedupConfig::default()
        };
        let out = deduplicate(&files, &cfg).unwrap();
        assert_eq!(out.kept.len(), 2);
    }

    #[test]
    fn dedup_threshold_is_strict_inequality() {
        // J exactly at the threshold is kept: "more than 90%" is strict
        let files = vec![local("A.sol", "a b c d e f g h i j"), local("B.sol", "a b c d e f g h i k")];
        let cfg = DedupConfig {
            similarity_threshold: 9.0 / 11.0,
            group_by_file_name: false,
            token_source: TokenSource::Whitespace,
            ..DedupConfig::default()
        };
        let out = deduplicate(&files, &cfg).unwrap();
        assert_eq!(out.kept.len(), 2, "J == threshold must not drop");
    }

    #[test]
    fn dedup_groups_by_file_name() {
        let mut a = local("A.sol", "contract A { uint x; }");
        a.address = "local:a1".into();
        let mut a2 = local("A.sol", "contract A { uint x; }");
        a2.address = "local:a2".into();
        let b = local("B.sol", "contract A { uint x; }");
        let out = deduplicate(&[a, a2, b], &DedupConfig::default()).unwrap();
        // identical text, but B.sol sits in its own group
        assert_eq!(out.kept.len(), 2);
    }

    #[test]
    fn split_sizes_follow_floor_rule() {
        let files: Vec<SourceFile> = (0..10)
            .map(|i| local(&format!("F{i}.sol"), &format!("contract F{i} {{}}")))
            .collect();
        let split = split_dataset(&files, &SplitSpec::new(0.8, 0.1, 0.1, 7)).unwrap();
        assert_eq!(split.train.len(), 8);
        assert_eq!(split.validation.len(), 1);
        assert_eq!(split.test.len(), 1);

        let tiny: Vec<SourceFile> = files[..3].to_vec();
        let split = split_dataset(&tiny, &SplitSpec::new(0.8, 0.1, 0.1, 7)).unwrap();
        assert_eq!(split.train.len(), 3);
        assert_eq!(split.validation.len(), 0);
        assert_eq!(split.test.len(), 0);
    }

    #[test]
    fn split_is_deterministic_and_partitions() {
        let files: Vec<SourceFile> = (0..25)
            .map(|i| local(&format!("F{i}.sol"), &format!("contract F{i} {{}}")))
            .collect();
        let spec = SplitSpec::new(0.6, 0.2, 0.2, 42);
        let s1 = split_dataset(&files, &spec).unwrap();
        let s2 = split_dataset(&files, &spec).unwrap();
        assert_eq!(s1.train, s2.train);
        assert_eq!(s1.validation, s2.validation);
        assert_eq!(s1.test, s2.test);

        let mut all: Vec<&SourceFile> = s1
            .train
            .iter()
            .chain(&s1.validation)
            .chain(&s1.test)
            .collect();
        assert_eq!(all.len(), files.len());
        all.sort_by_key(|f| f.file_name.clone());
        all.dedup_by_key(|f| f.file_name.clone());
        assert_eq!(all.len(), files.len(), "splits must be disjoint");
    }

    #[test]
    fn split_rejects_bad_fractions() {
        assert!(split_dataset(&[], &SplitSpec::new(0.5, 0.2, 0.2, 0)).is_err());
    }

    #[test]
    fn corpus_jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        let files = vec![local("A.sol", "contract A {}\n")];
        write_corpus_jsonl(&path, &files).unwrap();
        let line = fs::read_to_string(&path).unwrap();
        assert!(line.contains("\"origin\":\"local\""));
        assert_eq!(read_corpus_jsonl(&path).unwrap(), files);
    }

    #[test]
    fn malformed_jsonl_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        fs::write(
            &path,
            "{\"address\":\"local:a\",\"file_name\":\"a.sol\",\"text\":\"x\",\"origin\":\"local\"}\nnot json\n",
        )
        .unwrap();
        match read_corpus_jsonl(&path) {
            Err(CorpusError::MalformedJsonl { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected MalformedJsonl, got {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn dedup_is_idempotent(texts in prop::collection::vec("[a-f ]{1,30}", 1..12)) {
            let files: Vec<SourceFile> = texts
                .iter()
                .enumerate()
                .map(|(i, t)| local(&format!("F{}.sol", i % 3), t))
                .collect();
            let cfg = DedupConfig {
                token_source: TokenSource::Whitespace,
                ..DedupConfig::default()
            };
            let once = deduplicate(&files, &cfg).unwrap();
            let twice = deduplicate(&once.kept, &cfg).unwrap();
            prop_assert_eq!(twice.dropped_count, 0);
            prop_assert_eq!(once.kept, twice.kept);
        }

        #[test]
        fn jaccard_is_symmetric(a in "[a-h ]{0,40}", b in "[a-h ]{0,40}") {
            let fa = local("A.sol", &a);
            let fb = local("B.sol", &b);
            let cfg = DedupConfig {
                token_source: TokenSource::Whitespace,
                ..DedupConfig::default()
            };
            let ab = jaccard_similarity(&fa, &fb, &cfg);
            let ba = jaccard_similarity(&fb, &fa, &cfg);
            prop_assert_eq!(ab, ba);
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert_eq!(jaccard_similarity(&fa, &fa, &cfg), 1.0);
        }

        #[test]
        fn inflate_preserves_declaration_count(n in 1usize..6) {
            let text: String = (0..n)
                .map(|i| format!("contract C{i} {{ uint x{i}; }}\n"))
                .collect();
            let out = inflate(&local("Flat.sol", &text));
            prop_assert_eq!(out.files.len(), n);
        }
    }
}
