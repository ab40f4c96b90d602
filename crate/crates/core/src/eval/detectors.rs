//! Rule-based vulnerability pattern detectors.
//!
//! These are deliberately conservative token-level rules that stand in for
//! manual security review at desk scale. Each rule inspects only the code it
//! is given (a generated region or a whole file) and reports the first match
//! for its type with line-level evidence.

use serde::{Deserialize, Serialize};

use crate::labeling::{strip_labels, VulnType};
use crate::lexer::{self, TokenKind};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence {
    pub pattern: String,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Detection {
    pub flagged: bool,
    pub evidence: Option<Evidence>,
}

impl Detection {
    fn clear() -> Detection {
        Detection {
            flagged: false,
            evidence: None,
        }
    }

    fn hit(pattern: &str, line: usize) -> Detection {
        Detection {
            flagged: true,
            evidence: Some(Evidence {
                pattern: pattern.to_string(),
                line,
            }),
        }
    }
}

#[derive(Debug, Clone)]
struct Tok {
    text: String,
    kind: TokenKind,
    line: usize,
}

// One `;`- or brace-delimited statement.
#[derive(Debug, Clone)]
struct Stmt {
    tokens: Vec<Tok>,
    fn_index: usize,
}

impl Stmt {
    fn first(&self) -> Option<&str> {
        self.tokens.first().map(|t| t.text.as_str())
    }

    fn contains(&self, text: &str) -> bool {
        self.tokens.iter().any(|t| t.text == text)
    }

    fn find_seq(&self, seq: &[&str]) -> Option<usize> {
        if seq.is_empty() || self.tokens.len() < seq.len() {
            return None;
        }
        (0..=self.tokens.len() - seq.len()).find(|&i| {
            seq.iter()
                .enumerate()
                .all(|(j, s)| self.tokens[i + j].text == *s)
        })
    }

    fn has_seq(&self, seq: &[&str]) -> bool {
        self.find_seq(seq).is_some()
    }
}

fn statements(code: &str) -> Vec<Stmt> {
    let lexed = lexer::tokenize_solidity(code);
    let mut stmts = Vec::new();
    let mut current: Vec<Tok> = Vec::new();
    let mut fn_index = 0usize;
    let mut fn_counter = 0usize;
    fn flush(current: &mut Vec<Tok>, fn_index: usize, stmts: &mut Vec<Stmt>) {
        if !current.is_empty() {
            stmts.push(Stmt {
                tokens: std::mem::take(current),
                fn_index,
            });
        }
    }
    for t in lexed.tokens {
        if matches!(t.kind, TokenKind::Whitespace | TokenKind::Comment) {
            continue;
        }
        if t.kind == TokenKind::Keyword && t.text == "function" {
            flush(&mut current, fn_index, &mut stmts);
            fn_counter += 1;
            fn_index = fn_counter;
        }
        match t.text.as_str() {
            ";" | "{" | "}" => {
                current.push(Tok {
                    text: t.text,
                    kind: t.kind,
                    line: t.line,
                });
                flush(&mut current, fn_index, &mut stmts);
            }
            _ => current.push(Tok {
                text: t.text,
                kind: t.kind,
                line: t.line,
            }),
        }
    }
    flush(&mut current, fn_index, &mut stmts);
    stmts
}

fn is_safemath_stmt(stmt: &Stmt) -> bool {
    ["add", "sub", "mul", "div"]
        .iter()
        .any(|m| stmt.has_seq(&[".", m, "("]))
}

fn is_guard_stmt(stmt: &Stmt) -> bool {
    matches!(stmt.first(), Some("require" | "assert" | "if"))
}

// write to `name` (`name = ...`, `name[...] = ...`, compound assignments
// included) at the statement head
fn assigns_to(stmt: &Stmt, name: &str) -> bool {
    if stmt.first() != Some(name) {
        return false;
    }
    let mut depth = 0i32;
    for t in &stmt.tokens[1..] {
        match t.text.as_str() {
            "[" => depth += 1,
            "]" => depth -= 1,
            "=" | "+=" | "-=" | "*=" | "/=" if depth == 0 => return true,
            "==" | "!=" | "=>" => return false,
            "." if depth == 0 => return false,
            "(" => return false,
            _ => {}
        }
    }
    false
}

/// Apply the rule for `vuln_type` to `code`. Label tokens are stripped first
/// so generated (labeled) output can be scanned directly. Deterministic: the
/// same code always yields the same verdict.
pub fn detect_vulnerability_pattern(code: &str, vuln_type: VulnType) -> Detection {
    let (clean, _) = strip_labels(code);
    let stmts = statements(&clean);
    match vuln_type {
        VulnType::IntegerOverflowUnderflow => detect_iou(&stmts),
        VulnType::TxOrigin => detect_to(&stmts),
        VulnType::TimestampDependency => detect_td(&stmts),
        VulnType::Reentrancy => detect_re(&stmts),
        VulnType::UncheckedCall => detect_ucc(&stmts),
        VulnType::UnprotectedSuicide => detect_ups(&stmts),
        VulnType::DelegateCall => detect_dc(&stmts),
        VulnType::NestedCall => detect_nc(&stmts),
        VulnType::TransactionOrderDependency => detect_tod(&stmts),
        VulnType::FrozenEther => detect_fe(&stmts),
    }
}

// arithmetic +=, -= or a bare * inside an assignment, with no require/assert
// guard in the preceding three statements and no SafeMath in the statement
fn detect_iou(stmts: &[Stmt]) -> Detection {
    for (i, stmt) in stmts.iter().enumerate() {
        let op = stmt
            .tokens
            .iter()
            .find(|t| matches!(t.text.as_str(), "+=" | "-=" | "*="))
            .or_else(|| {
                if stmt.contains("=") {
                    stmt.tokens.iter().find(|t| t.text == "*")
                } else {
                    None
                }
            });
        let Some(op) = op else { continue };
        if is_safemath_stmt(stmt) {
            continue;
        }
        let guarded = stmts[..i]
            .iter()
            .rev()
            .filter(|s| s.fn_index == stmt.fn_index)
            .take(3)
            .any(|s| matches!(s.first(), Some("require" | "assert")));
        if !guarded {
            return Detection::hit(&format!("unguarded arithmetic `{}`", op.text), op.line);
        }
    }
    Detection::clear()
}

// comparison involving tx.origin
fn detect_to(stmts: &[Stmt]) -> Detection {
    for stmt in stmts {
        if let Some(i) = stmt.find_seq(&["tx", ".", "origin"]) {
            let compares = stmt.contains("==") || stmt.contains("!=") || is_guard_stmt(stmt);
            if compares {
                return Detection::hit("comparison with `tx.origin`", stmt.tokens[i].line);
            }
        }
    }
    Detection::clear()
}

// now / block.timestamp inside a condition, with a transfer-like call at or
// after that condition
fn detect_td(stmts: &[Stmt]) -> Detection {
    for (i, stmt) in stmts.iter().enumerate() {
        if !is_guard_stmt(stmt) {
            continue;
        }
        let ts = stmt
            .tokens
            .iter()
            .position(|t| t.text == "now")
            .or_else(|| stmt.find_seq(&["block", ".", "timestamp"]));
        let Some(ts) = ts else { continue };
        let transfers_after = stmts[i..].iter().any(|s| {
            s.has_seq(&[".", "transfer", "("])
                || s.has_seq(&[".", "send", "("])
                || s.has_seq(&[".", "call", "."])
                || s.has_seq(&[".", "call", "("])
        });
        if transfers_after {
            return Detection::hit(
                "timestamp-dependent condition guarding a transfer",
                stmt.tokens[ts].line,
            );
        }
    }
    Detection::clear()
}

// .call.value(...) with a state assignment at or after the call
fn detect_re(stmts: &[Stmt]) -> Detection {
    for (i, stmt) in stmts.iter().enumerate() {
        let call = stmt
            .find_seq(&[".", "call", ".", "value"])
            .or_else(|| stmt.find_seq(&[".", "call", "{"]));
        let Some(call) = call else { continue };
        let assigns_after = stmts[i..].iter().any(|s| {
            s.fn_index == stmt.fn_index
                && s.tokens
                    .iter()
                    .any(|t| matches!(t.text.as_str(), "=" | "+=" | "-="))
        });
        if assigns_after {
            return Detection::hit(
                "external call.value before state assignment",
                stmt.tokens[call].line,
            );
        }
    }
    Detection::clear()
}

// send( or call( whose statement result is neither captured nor tested
fn detect_ucc(stmts: &[Stmt]) -> Detection {
    for stmt in stmts {
        let call = stmt
            .find_seq(&[".", "send", "("])
            .or_else(|| stmt.find_seq(&[".", "call", "("]));
        let Some(call) = call else { continue };
        if is_guard_stmt(stmt) || matches!(stmt.first(), Some("while" | "return")) {
            continue;
        }
        // a `=` before the call site captures the result
        let captured = stmt.tokens[..call].iter().any(|t| t.text == "=");
        if !captured {
            let name = &stmt.tokens[call + 1].text;
            return Detection::hit(
                &format!("unchecked `{name}(` result"),
                stmt.tokens[call].line,
            );
        }
    }
    Detection::clear()
}

// selfdestruct( not dominated by an owner-style require in the same function
fn detect_ups(stmts: &[Stmt]) -> Detection {
    for (i, stmt) in stmts.iter().enumerate() {
        let Some(pos) = stmt.find_seq(&["selfdestruct", "("]) else {
            continue;
        };
        let dominated = stmts[..i]
            .iter()
            .any(|s| {
                s.fn_index == stmt.fn_index
                    && s.first() == Some("require")
                    && (s.has_seq(&["msg", ".", "sender"]) || s.contains("owner"))
            });
        if !dominated {
            return Detection::hit("unprotected `selfdestruct(`", stmt.tokens[pos].line);
        }
    }
    Detection::clear()
}

// .delegatecall( with a non-literal target expression
fn detect_dc(stmts: &[Stmt]) -> Detection {
    for stmt in stmts {
        let Some(pos) = stmt.find_seq(&[".", "delegatecall", "("]) else {
            continue;
        };
        if pos == 0 {
            continue;
        }
        let target = &stmt.tokens[pos - 1];
        let non_literal = matches!(target.kind, TokenKind::Identifier)
            || target.text == "]"
            || target.text == ")";
        if non_literal {
            return Detection::hit("delegatecall with dynamic target", target.line);
        }
    }
    Detection::clear()
}

// loop whose bound expression is not a literal. The first `;` of a
// `for (init; cond; step)` header closes a statement, so the condition is
// the statement right after the one that starts with `for`.
fn detect_nc(stmts: &[Stmt]) -> Detection {
    fn dynamic_bound(stmt: &Stmt) -> Option<usize> {
        for (i, t) in stmt.tokens.iter().enumerate() {
            if matches!(t.text.as_str(), "<" | "<=" | ">" | ">=") {
                if let Some(next) = stmt.tokens.get(i + 1) {
                    if next.kind == TokenKind::Identifier {
                        return Some(next.line);
                    }
                }
            }
        }
        None
    }
    for (i, stmt) in stmts.iter().enumerate() {
        let is_for = stmt.first() == Some("for");
        if !is_for && stmt.first() != Some("while") {
            continue;
        }
        if let Some(line) = dynamic_bound(stmt) {
            return Detection::hit("loop bound is not a literal", line);
        }
        if is_for {
            if let Some(line) = stmts.get(i + 1).and_then(dynamic_bound) {
                return Detection::hit("loop bound is not a literal", line);
            }
        }
    }
    Detection::clear()
}

// transfer/send amount mentions a state variable that some other function
// also writes
fn detect_tod(stmts: &[Stmt]) -> Detection {
    for stmt in stmts {
        let call = stmt
            .find_seq(&[".", "transfer", "("])
            .or_else(|| stmt.find_seq(&[".", "send", "("]));
        let Some(call) = call else { continue };
        // argument tokens up to the matching close paren
        let mut depth = 0i32;
        let mut args: Vec<&Tok> = Vec::new();
        for t in &stmt.tokens[call + 2..] {
            match t.text.as_str() {
                "(" => depth += 1,
                ")" if depth == 0 => break,
                ")" => depth -= 1,
                _ => {}
            }
            args.push(t);
        }
        for arg in args {
            if arg.kind != TokenKind::Identifier
                || matches!(arg.text.as_str(), "msg" | "sender" | "this" | "balance")
            {
                continue;
            }
            let written_elsewhere = stmts.iter().any(|s| {
                s.fn_index != stmt.fn_index && assigns_to(s, &arg.text)
            });
            if written_elsewhere {
                return Detection::hit(
                    &format!("transfer amount `{}` written elsewhere", arg.text),
                    arg.line,
                );
            }
        }
    }
    Detection::clear()
}

// payable entry point but no way to move ether out
fn detect_fe(stmts: &[Stmt]) -> Detection {
    let payable = stmts.iter().find_map(|s| {
        s.tokens
            .iter()
            .find(|t| t.text == "payable")
            .map(|t| t.line)
    });
    let Some(line) = payable else {
        return Detection::clear();
    };
    let can_move_out = stmts.iter().any(|s| {
        s.has_seq(&[".", "transfer", "("])
            || s.has_seq(&[".", "send", "("])
            || s.has_seq(&[".", "call", "("])
            || s.has_seq(&[".", "call", "."])
            || s.contains("selfdestruct")
    });
    if can_move_out {
        return Detection::clear();
    }
    Detection::hit("payable function without transfer-out capability", line)
}
