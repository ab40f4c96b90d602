//! Vulnerability-constrained decoding toolkit for Solidity-like code.
//!
//! The pipeline: ingest and deduplicate a contract corpus (`corpus`), align
//! multi-tool vulnerability reports and inject `<TYPE>` label tokens at the
//! vulnerable lines (`labeling`), train an autoregressive model on the
//! labeled corpus (`lm`), then generate completions with the label tokens
//! masked to negative infinity so the model routes around the code it
//! learned to mark as vulnerable (`decoding`). `eval` scores completions
//! with BLEU/CrystalBLEU and measures labeling accuracy and vulnerability
//! avoidance with rule-based detectors.

pub mod corpus;
pub mod decoding;
pub mod eval;
pub mod labeling;
pub mod lexer;
pub mod lm;

pub use corpus::{SourceFile, TokenSource};
pub use decoding::{complete_function, DecodeConfig, GenerationResult};
pub use labeling::VulnType;
pub use lm::{LanguageModel, NgramLm, Vocabulary};
