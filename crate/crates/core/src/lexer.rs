//! Tokenization for Solidity-like source.
//!
//! Two tokenizers are provided: a plain whitespace splitter and a lexer for a
//! Solidity subset (keywords, identifiers, literals, comments, multi-char
//! operators). Both are lossless: concatenating the `text` of every emitted
//! token, whitespace included, reproduces the input byte for byte.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Lexical class of a token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TokenKind {
    Identifier,
    Keyword,
    Number,
    StringLit,
    Punctuation,
    Comment,
    Whitespace,
    Label,
}

/// One lexical token with its position in the source.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub kind: TokenKind,
    pub text: String,
    /// 1-based line number.
    pub line: usize,
    /// 1-based byte column within the line.
    pub column: usize,
    pub byte_offset: usize,
}

impl Token {
    pub fn is_whitespace(&self) -> bool {
        self.kind == TokenKind::Whitespace
    }

    pub fn is_comment(&self) -> bool {
        self.kind == TokenKind::Comment
    }
}

/// Non-fatal issue found while lexing (unterminated string or comment).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexDiagnostic {
    pub message: String,
    pub line: usize,
    pub byte_offset: usize,
}

/// Tokens plus any diagnostics collected along the way.
#[derive(Debug, Clone, Default)]
pub struct LexOutput {
    pub tokens: Vec<Token>,
    pub diagnostics: Vec<LexDiagnostic>,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("byte offset {offset} out of range for text of length {len}")]
pub struct OffsetOutOfRange {
    pub offset: usize,
    pub len: usize,
}

/// Byte-offset to line-number map for one source text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineMap {
    newline_offsets: Vec<usize>,
    text_len: usize,
}

impl LineMap {
    pub fn new(text: &str) -> Self {
        let newline_offsets = text
            .bytes()
            .enumerate()
            .filter(|(_, b)| *b == b'\n')
            .map(|(i, _)| i)
            .collect();
        LineMap {
            newline_offsets,
            text_len: text.len(),
        }
    }

    /// 1-based line containing the byte at `offset`.
    pub fn line_of(&self, offset: usize) -> Result<usize, OffsetOutOfRange> {
        if offset >= self.text_len {
            return Err(OffsetOutOfRange {
                offset,
                len: self.text_len,
            });
        }
        Ok(self.newline_offsets.partition_point(|&n| n < offset) + 1)
    }

    /// Number of lines; a trailing newline does not open a new line.
    pub fn line_count(&self) -> usize {
        let n = self.newline_offsets.len();
        if self.text_len == 0 {
            0
        } else if self.newline_offsets.last() == Some(&(self.text_len - 1)) {
            n
        } else {
            n + 1
        }
    }

    /// Byte offset of the first byte of 1-based `line`, if the line exists.
    pub fn line_start(&self, line: usize) -> Option<usize> {
        if line == 0 || line > self.line_count() {
            return None;
        }
        if line == 1 {
            Some(0)
        } else {
            Some(self.newline_offsets[line - 2] + 1)
        }
    }

    /// Byte offset one past the last content byte of `line` (newline excluded).
    pub fn line_end(&self, line: usize) -> Option<usize> {
        if line == 0 || line > self.line_count() {
            return None;
        }
        Some(
            self.newline_offsets
                .get(line - 1)
                .copied()
                .unwrap_or(self.text_len),
        )
    }
}

/// Active set of label tokens (`<IOU>`, `<TD>`, ...) the lexer should emit as
/// single `Label` tokens. With an empty registry `<IOU>` lexes as `<`, `IOU`, `>`.
#[derive(Debug, Clone, Default)]
pub struct LabelRegistry {
    // sorted longest-first so prefix matching picks the longest label
    tokens: Vec<String>,
}

impl LabelRegistry {
    pub fn new<I, S>(label_tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut tokens: Vec<String> = label_tokens.into_iter().map(Into::into).collect();
        tokens.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
        tokens.dedup();
        LabelRegistry { tokens }
    }

    pub fn empty() -> Self {
        LabelRegistry::default()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    fn match_at<'a>(&self, rest: &'a str) -> Option<&str> {
        self.tokens
            .iter()
            .find(|t| rest.starts_with(t.as_str()))
            .map(|t| t.as_str())
    }
}

/// Split into maximal runs of non-whitespace, emitting the whitespace runs as
/// tokens too so the round-trip invariant holds. Total: never fails.
pub fn tokenize_whitespace(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut pos = Positions::new();
    let mut chars = text.char_indices().peekable();
    while let Some(&(start, c)) = chars.peek() {
        let ws = c.is_whitespace();
        let mut end = start;
        while let Some(&(i, c2)) = chars.peek() {
            if c2.is_whitespace() != ws {
                break;
            }
            end = i + c2.len_utf8();
            chars.next();
        }
        let kind = if ws {
            TokenKind::Whitespace
        } else {
            TokenKind::Identifier
        };
        tokens.push(pos.token(kind, &text[start..end], start));
    }
    tokens
}

/// Lex with the Solidity-subset grammar and no active labels.
pub fn tokenize_solidity(text: &str) -> LexOutput {
    tokenize_solidity_with_labels(text, &LabelRegistry::empty())
}

/// Lex with the Solidity-subset grammar, emitting registered labels as
/// single `Label` tokens. Never fails; malformed input degrades to
/// single-char punctuation tokens and unterminated strings/comments are
/// reported as diagnostics.
pub fn tokenize_solidity_with_labels(text: &str, labels: &LabelRegistry) -> LexOutput {
    Lexer::new(text, labels).run()
}

// Tracks line/column while tokens are appended in input order.
struct Positions {
    line: usize,
    column: usize,
}

impl Positions {
    fn new() -> Self {
        Positions { line: 1, column: 1 }
    }

    fn token(&mut self, kind: TokenKind, text: &str, byte_offset: usize) -> Token {
        let tok = Token {
            kind,
            text: text.to_string(),
            line: self.line,
            column: self.column,
            byte_offset,
        };
        for b in text.bytes() {
            if b == b'\n' {
                self.line += 1;
                self.column = 1;
            } else {
                self.column += 1;
            }
        }
        tok
    }
}

const SOLIDITY_KEYWORDS: &[&str] = &[
    "abstract",
    "address",
    "assert",
    "bool",
    "break",
    "byte",
    "bytes",
    "calldata",
    "constant",
    "constructor",
    "continue",
    "contract",
    "delete",
    "do",
    "else",
    "emit",
    "enum",
    "event",
    "external",
    "fallback",
    "for",
    "function",
    "if",
    "import",
    "int",
    "interface",
    "internal",
    "is",
    "library",
    "mapping",
    "memory",
    "modifier",
    "new",
    "payable",
    "pragma",
    "private",
    "public",
    "pure",
    "receive",
    "require",
    "return",
    "returns",
    "revert",
    "selfdestruct",
    "storage",
    "string",
    "struct",
    "uint",
    "using",
    "view",
    "while",
];

// Longest-first so greedy matching picks maximal operators.
const MULTI_CHAR_PUNCT: &[&str] = &[
    ">>=", "<<=", "**=", "==", "!=", "<=", ">=", "&&", "||", "+=", "-=", "*=", "/=", "%=", "&=",
    "|=", "^=", "++", "--", "->", "=>", "<<", ">>", "**",
];

fn is_keyword(word: &str) -> bool {
    if SOLIDITY_KEYWORDS.binary_search(&word).is_ok() {
        return true;
    }
    // sized integer and bytes types: uint8..uint256, int8..int256, bytes1..bytes32
    for base in ["uint", "int", "bytes"] {
        if let Some(suffix) = word.strip_prefix(base) {
            if !suffix.is_empty() && suffix.bytes().all(|b| b.is_ascii_digit()) {
                return true;
            }
        }
    }
    false
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_' || c == '$'
}

fn is_ident_continue(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '$'
}

struct Lexer<'a> {
    text: &'a str,
    labels: &'a LabelRegistry,
    pos: usize,
    out: LexOutput,
    positions: Positions,
}

impl<'a> Lexer<'a> {
    fn new(text: &'a str, labels: &'a LabelRegistry) -> Self {
        Lexer {
            text,
            labels,
            pos: 0,
            out: LexOutput::default(),
            positions: Positions::new(),
        }
    }

    fn rest(&self) -> &'a str {
        &self.text[self.pos..]
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn emit(&mut self, kind: TokenKind, end: usize) {
        debug_assert!(end > self.pos);
        let tok = self
            .positions
            .token(kind, &self.text[self.pos..end], self.pos);
        self.out.tokens.push(tok);
        self.pos = end;
    }

    fn diagnostic(&mut self, message: impl Into<String>) {
        self.out.diagnostics.push(LexDiagnostic {
            message: message.into(),
            line: self.positions.line,
            byte_offset: self.pos,
        });
    }

    fn run(mut self) -> LexOutput {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.lex_whitespace();
            } else if self.rest().starts_with("//") {
                self.lex_line_comment();
            } else if self.rest().starts_with("/*") {
                self.lex_block_comment();
            } else if c == '"' || c == '\'' {
                self.lex_string(c);
            } else if let Some(label) = self.labels.match_at(self.rest()) {
                let end = self.pos + label.len();
                self.emit(TokenKind::Label, end);
            } else if is_ident_start(c) {
                self.lex_identifier();
            } else if c.is_ascii_digit() {
                self.lex_number();
            } else {
                self.lex_punctuation(c);
            }
        }
        self.out
    }

    fn lex_whitespace(&mut self) {
        let mut end = self.pos;
        for (i, c) in self.rest().char_indices() {
            if !c.is_whitespace() {
                break;
            }
            end = self.pos + i + c.len_utf8();
        }
        self.emit(TokenKind::Whitespace, end);
    }

    fn lex_line_comment(&mut self) {
        let end = match self.rest().find('\n') {
            Some(i) => self.pos + i,
            None => self.text.len(),
        };
        self.emit(TokenKind::Comment, end);
    }

    fn lex_block_comment(&mut self) {
        match self.rest()[2..].find("*/") {
            Some(i) => {
                let end = self.pos + 2 + i + 2;
                self.emit(TokenKind::Comment, end);
            }
            None => {
                self.diagnostic("unterminated block comment");
                self.emit(TokenKind::Comment, self.text.len());
            }
        }
    }

    fn lex_string(&mut self, quote: char) {
        let bytes = self.rest().as_bytes();
        let mut i = 1;
        while i < bytes.len() {
            match bytes[i] {
                b'\\' if i + 1 < bytes.len() => i += 2,
                b'\n' => {
                    // Solidity strings are single-line; treat as unterminated.
                    self.diagnostic("unterminated string literal");
                    self.emit(TokenKind::StringLit, self.pos + i);
                    return;
                }
                b if b == quote as u8 => {
                    self.emit(TokenKind::StringLit, self.pos + i + 1);
                    return;
                }
                _ => i += 1,
            }
        }
        self.diagnostic("unterminated string literal");
        self.emit(TokenKind::StringLit, self.text.len());
    }

    fn lex_identifier(&mut self) {
        let mut end = self.pos;
        for (i, c) in self.rest().char_indices() {
            if !is_ident_continue(c) {
                break;
            }
            end = self.pos + i + c.len_utf8();
        }
        let kind = if is_keyword(&self.text[self.pos..end]) {
            TokenKind::Keyword
        } else {
            TokenKind::Identifier
        };
        self.emit(kind, end);
    }

    fn lex_number(&mut self) {
        let bytes = self.rest().as_bytes();
        let mut i = 0;
        if bytes.len() > 1 && bytes[0] == b'0' && (bytes[1] == b'x' || bytes[1] == b'X') {
            i = 2;
            while i < bytes.len() && (bytes[i].is_ascii_hexdigit() || bytes[i] == b'_') {
                i += 1;
            }
            self.emit(TokenKind::Number, self.pos + i);
            return;
        }
        while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'_') {
            i += 1;
        }
        if i < bytes.len() && bytes[i] == b'.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)
        {
            i += 1;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'_') {
                i += 1;
            }
        }
        // exponent only when followed by a digit, so "1e60" is one literal
        // but "1ether" splits into a number and an identifier
        if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
            let mut j = i + 1;
            if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                j += 1;
            }
            if j < bytes.len() && bytes[j].is_ascii_digit() {
                i = j;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
            }
        }
        self.emit(TokenKind::Number, self.pos + i);
    }

    fn lex_punctuation(&mut self, c: char) {
        for op in MULTI_CHAR_PUNCT {
            if self.rest().starts_with(op) {
                let end = self.pos + op.len();
                self.emit(TokenKind::Punctuation, end);
                return;
            }
        }
        // any unknown char becomes a single-char punctuation token
        self.emit(TokenKind::Punctuation, self.pos + c.len_utf8());
    }
}
