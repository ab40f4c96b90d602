//! Vulnerability labels and the operations that attach them to source.
//!
//! Reports from different analysis tools rarely agree on the exact line of a
//! finding, so reports of the same type within a line window are aligned into
//! one confirmed vulnerability. Confirmed vulnerabilities are then materialized
//! as `<TYPE>` tokens injected at the start of the affected line (after
//! indentation), and can be stripped back out losslessly.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::SourceFile;
use crate::lexer::{self, LabelRegistry, LineMap, TokenKind};

/// The ten supported vulnerability types. Variant order is label-code order
/// and decides how multiple labels on one line are arranged.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub enum VulnType {
    #[serde(rename = "DC")]
    DelegateCall,
    #[serde(rename = "FE")]
    FrozenEther,
    #[serde(rename = "IOU")]
    IntegerOverflowUnderflow,
    #[serde(rename = "NC")]
    NestedCall,
    #[serde(rename = "RE")]
    Reentrancy,
    #[serde(rename = "TD")]
    TimestampDependency,
    #[serde(rename = "TO")]
    TxOrigin,
    #[serde(rename = "TOD")]
    TransactionOrderDependency,
    #[serde(rename = "UcC")]
    UncheckedCall,
    #[serde(rename = "UpS")]
    UnprotectedSuicide,
}

impl VulnType {
    pub const ALL: [VulnType; 10] = [
        VulnType::DelegateCall,
        VulnType::FrozenEther,
        VulnType::IntegerOverflowUnderflow,
        VulnType::NestedCall,
        VulnType::Reentrancy,
        VulnType::TimestampDependency,
        VulnType::TxOrigin,
        VulnType::TransactionOrderDependency,
        VulnType::UncheckedCall,
        VulnType::UnprotectedSuicide,
    ];

    pub fn code(&self) -> &'static str {
        match self {
            VulnType::DelegateCall => "DC",
            VulnType::FrozenEther => "FE",
            VulnType::IntegerOverflowUnderflow => "IOU",
            VulnType::NestedCall => "NC",
            VulnType::Reentrancy => "RE",
            VulnType::TimestampDependency => "TD",
            VulnType::TxOrigin => "TO",
            VulnType::TransactionOrderDependency => "TOD",
            VulnType::UncheckedCall => "UcC",
            VulnType::UnprotectedSuicide => "UpS",
        }
    }

    /// The `<CODE>` token injected into source and added to vocabularies.
    pub fn label_token(&self) -> String {
        format!("<{}>", self.code())
    }

    /// Registry holding all ten label tokens.
    pub fn registry() -> LabelRegistry {
        LabelRegistry::new(VulnType::ALL.iter().map(|v| v.label_token()))
    }

    /// Reverse of `label_token`.
    pub fn from_label_token(token: &str) -> Option<VulnType> {
        let code = token.strip_prefix('<')?.strip_suffix('>')?;
        code.parse().ok()
    }
}

impl fmt::Display for VulnType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown vulnerability code `{0}`")]
pub struct UnknownVulnCode(String);

impl FromStr for VulnType {
    type Err = UnknownVulnCode;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        VulnType::ALL
            .iter()
            .find(|v| v.code() == s)
            .copied()
            .ok_or_else(|| UnknownVulnCode(s.to_string()))
    }
}

/// One finding reported by one analysis tool.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolReport {
    #[serde(rename = "tool")]
    pub tool_id: String,
    #[serde(rename = "type")]
    pub vuln_type: VulnType,
    pub address: String,
    pub file_name: String,
    /// 1-based line.
    pub line: usize,
}

/// Reports of the same type from several tools, confirmed as one finding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignedVulnerability {
    pub vuln_type: VulnType,
    pub address: String,
    pub file_name: String,
    pub member_reports: Vec<ToolReport>,
    pub canonical_line: usize,
    /// max member line minus min member line.
    pub spread: usize,
}

/// Alignment parameters: reports within `window` lines of each other count as
/// the same finding when at least `min_tools` distinct tools agree.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlignConfig {
    pub window: usize,
    pub min_tools: usize,
}

impl Default for AlignConfig {
    fn default() -> Self {
        AlignConfig {
            window: 5,
            min_tools: 2,
        }
    }
}

#[derive(Debug, Error)]
pub enum LabelError {
    #[error("vulnerable line {line} out of range: file has {line_count} lines")]
    LineOutOfRange { line: usize, line_count: usize },
    #[error("alignment config invalid: {0}")]
    InvalidConfig(String),
}

type BucketKey = (String, String, VulnType);

/// Result of aligning a batch of tool reports.
#[derive(Debug, Clone, Default)]
pub struct AlignmentOutcome {
    pub aligned: Vec<AlignedVulnerability>,
    /// Reports no valid group could absorb.
    pub unconfirmed: Vec<ToolReport>,
    /// Buckets too large for exact search, grouped with the greedy fallback.
    pub greedy_buckets: Vec<BucketKey>,
}

/// Buckets above this size fall back to greedy grouping.
const EXACT_SEARCH_LIMIT: usize = 12;

/// Group reports per (address, file, type) bucket. Within a bucket, groups
/// must draw from at least `min_tools` distinct tools (one report per tool)
/// and stay within the line window. Among all feasible groupings the one with
/// the most groups wins, ties resolved by smallest total spread, then by
/// lowest lines and tool ids.
pub fn align_reports(
    reports: &[ToolReport],
    cfg: &AlignConfig,
) -> Result<AlignmentOutcome, LabelError> {
    if cfg.min_tools < 2 {
        return Err(LabelError::InvalidConfig(
            "min_tools must be at least 2".into(),
        ));
    }

    let mut buckets: BTreeMap<BucketKey, Vec<ToolReport>> = BTreeMap::new();
    for r in reports {
        buckets
            .entry((r.address.clone(), r.file_name.clone(), r.vuln_type))
            .or_default()
            .push(r.clone());
    }

    let mut outcome = AlignmentOutcome::default();
    for (key, mut bucket) in buckets {
        bucket.sort_by(|a, b| a.line.cmp(&b.line).then_with(|| a.tool_id.cmp(&b.tool_id)));
        let grouping = if bucket.len() <= EXACT_SEARCH_LIMIT {
            exact_grouping(&bucket, cfg)
        } else {
            outcome.greedy_buckets.push(key.clone());
            greedy_grouping(&bucket, cfg)
        };
        let mut used = vec![false; bucket.len()];
        for group in grouping {
            let members: Vec<ToolReport> = group.iter().map(|&i| bucket[i].clone()).collect();
            for &i in &group {
                used[i] = true;
            }
            let lines: Vec<usize> = members.iter().map(|m| m.line).collect();
            let spread = lines.iter().max().unwrap() - lines.iter().min().unwrap();
            let mut aligned = AlignedVulnerability {
                vuln_type: key.2,
                address: key.0.clone(),
                file_name: key.1.clone(),
                member_reports: members,
                canonical_line: 0,
                spread,
            };
            aligned.canonical_line = canonical_line(&aligned);
            outcome.aligned.push(aligned);
        }
        for (i, r) in bucket.into_iter().enumerate() {
            if !used[i] {
                outcome.unconfirmed.push(r);
            }
        }
    }
    Ok(outcome)
}

// Exhaustive search over groupings of one bucket (reports sorted by line).
// Returns groups as index sets into the bucket.
fn exact_grouping(bucket: &[ToolReport], cfg: &AlignConfig) -> Vec<Vec<usize>> {
    struct Best {
        groups: Vec<Vec<usize>>,
        count: usize,
        spread: usize,
    }
    struct Search<'a> {
        bucket: &'a [ToolReport],
        cfg: &'a AlignConfig,
        best: Option<Best>,
    }

    impl Search<'_> {
        fn consider(&mut self, groups: &[Vec<usize>], spread: usize) {
            let count = groups.len();
            let better = match &self.best {
                None => true,
                Some(b) => {
                    (count, std::cmp::Reverse(spread), std::cmp::Reverse(groups))
                        > (
                            b.count,
                            std::cmp::Reverse(b.spread),
                            std::cmp::Reverse(&b.groups),
                        )
                }
            };
            if better {
                self.best = Some(Best {
                    groups: groups.to_vec(),
                    count,
                    spread,
                });
            }
        }

        fn recurse(&mut self, unused: &[usize], groups: &mut Vec<Vec<usize>>, spread: usize) {
            // bound: even grouping every remaining report cannot beat the best
            if let Some(b) = &self.best {
                if groups.len() + unused.len() / self.cfg.min_tools < b.count {
                    return;
                }
            }
            let Some((&first, rest)) = unused.split_first() else {
                self.consider(groups, spread);
                return;
            };

            // candidates that can share a group with `first` (it has the
            // lowest line among unused, so max-min <= window is the only check)
            let candidates: Vec<usize> = rest
                .iter()
                .copied()
                .filter(|&j| self.bucket[j].line - self.bucket[first].line <= self.cfg.window)
                .collect();

            for mask in 0u32..(1 << candidates.len()) {
                let mut group = vec![first];
                for (bit, &j) in candidates.iter().enumerate() {
                    if mask & (1 << bit) != 0 {
                        group.push(j);
                    }
                }
                if group.len() < self.cfg.min_tools || !distinct_tools(self.bucket, &group) {
                    continue;
                }
                let lines: Vec<usize> = group.iter().map(|&i| self.bucket[i].line).collect();
                let gspread = lines.iter().max().unwrap() - lines.iter().min().unwrap();
                let remaining: Vec<usize> = rest
                    .iter()
                    .copied()
                    .filter(|j| !group.contains(j))
                    .collect();
                groups.push(group);
                self.recurse(&remaining, groups, spread + gspread);
                groups.pop();
            }

            // or leave `first` unconfirmed
            self.recurse(rest, groups, spread);
        }
    }

    let mut search = Search {
        bucket,
        cfg,
        best: None,
    };
    let all: Vec<usize> = (0..bucket.len()).collect();
    search.recurse(&all, &mut Vec::new(), 0);
    search.best.map(|b| b.groups).unwrap_or_default()
}

fn distinct_tools(bucket: &[ToolReport], group: &[usize]) -> bool {
    for (a, &i) in group.iter().enumerate() {
        for &j in &group[a + 1..] {
            if bucket[i].tool_id == bucket[j].tool_id {
                return false;
            }
        }
    }
    true
}

// Greedy fallback for oversized buckets: repeatedly take the minimum-spread
// group of exactly `min_tools` reports from distinct tools.
fn greedy_grouping(bucket: &[ToolReport], cfg: &AlignConfig) -> Vec<Vec<usize>> {
    let mut used = vec![false; bucket.len()];
    let mut groups = Vec::new();
    loop {
        let mut best: Option<(usize, Vec<usize>)> = None;
        let free: Vec<usize> = (0..bucket.len()).filter(|&i| !used[i]).collect();
        for combo in combinations(&free, cfg.min_tools) {
            let span = bucket[*combo.last().unwrap()].line - bucket[combo[0]].line;
            if span > cfg.window || !distinct_tools(bucket, &combo) {
                continue;
            }
            if best.as_ref().is_none_or(|(s, g)| (span, &combo) < (*s, g)) {
                best = Some((span, combo));
            }
        }
        match best {
            Some((_, group)) => {
                for &i in &group {
                    used[i] = true;
                }
                groups.push(group);
            }
            None => break,
        }
    }
    groups
}

fn combinations(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k == 0 || k > items.len() {
        return out;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.iter().map(|&i| items[i]).collect());
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if idx[i] != i + items.len() - k {
                break;
            }
            if i == 0 {
                return out;
            }
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Lower median of the member lines.
pub fn canonical_line(v: &AlignedVulnerability) -> usize {
    let mut lines: Vec<usize> = v.member_reports.iter().map(|m| m.line).collect();
    lines.sort_unstable();
    lines[(lines.len() - 1) / 2]
}

/// Result of injecting labels into one file.
#[derive(Debug, Clone)]
pub struct InjectOutcome {
    pub file: SourceFile,
    /// (type, line) for each label actually written, post relocation.
    pub injected: Vec<(VulnType, usize)>,
    pub warnings: Vec<String>,
}

/// Inject each vulnerability's label token at its canonical line, after the
/// line's leading whitespace. Blank or comment-only target lines push the
/// label down to the next code line within `cfg.window` lines; if none exists
/// the label is skipped with a warning.
pub fn inject_labels(
    file: &SourceFile,
    vulns: &[AlignedVulnerability],
    cfg: &AlignConfig,
) -> Result<InjectOutcome, LabelError> {
    let targets: Vec<(VulnType, usize)> = vulns
        .iter()
        .map(|v| (v.vuln_type, v.canonical_line))
        .collect();
    inject_at_lines(file, &targets, cfg.window)
}

/// Lower-level injection for callers that already know the exact lines
/// (synthetic ground truth, pre-aligned data).
pub fn inject_at_lines(
    file: &SourceFile,
    targets: &[(VulnType, usize)],
    window: usize,
) -> Result<InjectOutcome, LabelError> {
    let text = &file.text;
    let map = LineMap::new(text);
    let line_count = map.line_count();
    for &(_, line) in targets {
        if line == 0 || line > line_count {
            return Err(LabelError::LineOutOfRange { line, line_count });
        }
    }

    let code_lines = code_line_flags(text, &map);
    let mut warnings = Vec::new();

    // resolve relocations, then group labels per final line
    let mut per_line: BTreeMap<usize, Vec<VulnType>> = BTreeMap::new();
    for &(vt, line) in targets {
        match relocate(line, window, line_count, &code_lines) {
            Some(final_line) => {
                if final_line != line {
                    warnings.push(format!(
                        "label {} moved from blank/comment line {} to line {}",
                        vt.label_token(),
                        line,
                        final_line
                    ));
                }
                per_line.entry(final_line).or_default().push(vt);
            }
            None => warnings.push(format!(
                "label {} skipped: no code line within {} lines of line {}",
                vt.label_token(),
                window,
                line
            )),
        }
    }

    let mut injected = Vec::new();
    let mut out = String::with_capacity(text.len() + per_line.len() * 6);
    let mut cursor = 0;
    for (&line, types) in &per_line {
        let mut types = types.clone();
        types.sort();
        let start = map.line_start(line).expect("validated line");
        let end = map.line_end(line).expect("validated line");
        let indent_len = text[start..end]
            .bytes()
            .take_while(|b| *b == b' ' || *b == b'\t')
            .count();
        let insert_at = start + indent_len;
        out.push_str(&text[cursor..insert_at]);
        for vt in &types {
            out.push_str(&vt.label_token());
            injected.push((*vt, line));
        }
        cursor = insert_at;
    }
    out.push_str(&text[cursor..]);

    Ok(InjectOutcome {
        file: SourceFile {
            text: out,
            ..file.clone()
        },
        injected,
        warnings,
    })
}

// true at index line-1 when the line carries non-comment content
fn code_line_flags(text: &str, map: &LineMap) -> Vec<bool> {
    let mut flags = vec![false; map.line_count()];
    let out = lexer::tokenize_solidity_with_labels(text, &VulnType::registry());
    for tok in &out.tokens {
        if matches!(tok.kind, TokenKind::Whitespace | TokenKind::Comment) {
            continue;
        }
        let first = tok.line;
        let last = first + tok.text.bytes().filter(|b| *b == b'\n').count();
        for line in first..=last.min(flags.len()) {
            flags[line - 1] = true;
        }
    }
    flags
}

fn relocate(line: usize, window: usize, line_count: usize, code_lines: &[bool]) -> Option<usize> {
    (line..=(line + window).min(line_count)).find(|&l| code_lines[l - 1])
}

/// Remove every registered label token, reporting each removal with its
/// (1-based) line. Inverse of injection: stripping an injected file restores
/// the original bytes exactly.
pub fn strip_labels(text: &str) -> (String, Vec<(VulnType, usize)>) {
    let mut removed = Vec::new();
    let mut out = String::with_capacity(text.len());
    // longest-first keeps <TOD> from partially matching shorter codes
    let mut patterns: Vec<(String, VulnType)> = VulnType::ALL
        .iter()
        .map(|v| (v.label_token(), *v))
        .collect();
    patterns.sort_by(|a, b| b.0.len().cmp(&a.0.len()));

    let mut line = 1;
    let mut rest = text;
    'outer: while !rest.is_empty() {
        if rest.starts_with('<') {
            for (pat, vt) in &patterns {
                if rest.starts_with(pat.as_str()) {
                    removed.push((*vt, line));
                    rest = &rest[pat.len()..];
                    continue 'outer;
                }
            }
        }
        let c = rest.chars().next().unwrap();
        if c == '\n' {
            line += 1;
        }
        out.push(c);
        rest = &rest[c.len_utf8()..];
    }
    (out, removed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Origin, SourceFile};
    use proptest::prelude::*;

    fn report(tool: &str, vt: VulnType, line: usize) -> ToolReport {
        ToolReport {
            tool_id: tool.to_string(),
            vuln_type: vt,
            address: "a".repeat(40),
            file_name: "X.sol".to_string(),
            line,
        }
    }

    fn synthetic_file(text: &str) -> SourceFile {
        SourceFile {
            address: "synthetic:test".to_string(),
            file_name: "X.sol".to_string(),
            text: text.to_string(),
            origin: Origin::Synthetic,
        }
    }

    const IOU: VulnType = VulnType::IntegerOverflowUnderflow;

    #[test]
    fn vuln_type_codes_and_tokens() {
        assert_eq!(IOU.label_token(), "<IOU>");
        assert_eq!("TOD".parse::<VulnType>().unwrap().code(), "TOD");
        assert!("XX".parse::<VulnType>().is_err());
        assert_eq!(
            VulnType::from_label_token("<UcC>"),
            Some(VulnType::UncheckedCall)
        );
        // label order on a shared line follows code order
        let mut v = vec![VulnType::TimestampDependency, VulnType::Reentrancy];
        v.sort();
        assert_eq!(v[0].code(), "RE");
    }

    #[test]
    fn aligns_two_tools_within_window() {
        let out = align_reports(
            &[report("oyente", IOU, 10), report("slither", IOU, 13)],
            &AlignConfig::default(),
        )
        .unwrap();
        assert_eq!(out.aligned.len(), 1);
        assert_eq!(out.aligned[0].spread, 3);
        assert_eq!(out.aligned[0].canonical_line, 10);
        assert!(out.unconfirmed.is_empty());
    }

    #[test]
    fn rejects_pair_outside_window() {
        let out = align_reports(
            &[report("oyente", IOU, 10), report("slither", IOU, 16)],
            &AlignConfig::default(),
        )
        .unwrap();
        assert!(out.aligned.is_empty());
        assert_eq!(out.unconfirmed.len(), 2);
    }

    #[test]
    fn picks_min_spread_assignment() {
        let out = align_reports(
            &[
                report("oyente", IOU, 10),
                report("oyente", IOU, 14),
                report("slither", IOU, 13),
            ],
            &AlignConfig::default(),
        )
        .unwrap();
        assert_eq!(out.aligned.len(), 1);
        let lines: Vec<usize> = out.aligned[0]
            .member_reports
            .iter()
            .map(|r| r.line)
            .collect();
        assert_eq!(lines, vec![13, 14]);
        assert_eq!(out.aligned[0].spread, 1);
        assert_eq!(out.unconfirmed.len(), 1);
        assert_eq!(out.unconfirmed[0].line, 10);
    }

    #[test]
    fn single_tool_is_unconfirmed() {
        let out = align_reports(&[report("oyente", IOU, 10)], &AlignConfig::default()).unwrap();
        assert!(out.aligned.is_empty());
        assert_eq!(out.unconfirmed.len(), 1);
    }

    #[test]
    fn same_tool_cannot_confirm_itself() {
        let out = align_reports(
            &[report("oyente", IOU, 10), report("oyente", IOU, 11)],
            &AlignConfig::default(),
        )
        .unwrap();
        assert!(out.aligned.is_empty());
    }

    #[test]
    fn canonical_line_is_lower_median() {
        let make = |lines: &[usize]| AlignedVulnerability {
            vuln_type: IOU,
            address: String::new(),
            file_name: String::new(),
            member_reports: lines.iter().map(|&l| report("t", IOU, l)).collect(),
            canonical_line: 0,
            spread: 0,
        };
        assert_eq!(canonical_line(&make(&[10, 13])), 10);
        assert_eq!(canonical_line(&make(&[10, 12, 14])), 12);
        assert_eq!(canonical_line(&make(&[13, 10, 14, 13])), 13);
    }

    #[test]
    fn injects_label_after_indentation() {
        let file = synthetic_file(
            "function increaseLockTime(uint _seconds) public {\n    lockTime[msg.sender] += _seconds;\n}\n",
        );
        let out = inject_at_lines(&file, &[(IOU, 2)], 5).unwrap();
        assert_eq!(
            out.file.text,
            "function increaseLockTime(uint _seconds) public {\n    <IOU>lockTime[msg.sender] += _seconds;\n}\n"
        );
        assert_eq!(out.injected, vec![(IOU, 2)]);
        assert!(out.warnings.is_empty());
    }

    #[test]
    fn empty_vuln_list_is_identity() {
        let file = synthetic_file("contract A {}\n");
        let out = inject_labels(&file, &[], &AlignConfig::default()).unwrap();
        assert_eq!(out.file.text, file.text);
    }

    #[test]
    fn same_line_labels_in_code_order() {
        let file = synthetic_file("a;\nb;\n");
        let targets = [
            (VulnType::TimestampDependency, 2),
            (VulnType::Reentrancy, 2),
        ];
        let out = inject_at_lines(&file, &targets, 5).unwrap();
        assert_eq!(out.file.text, "a;\n<RE><TD>b;\n");
    }

    #[test]
    fn relocates_from_blank_and_comment_lines() {
        let file = synthetic_file("x;\n\n// note\ny;\n");
        let out = inject_at_lines(&file, &[(IOU, 2)], 5).unwrap();
        assert_eq!(out.file.text, "x;\n\n// note\n<IOU>y;\n");
        assert_eq!(out.injected, vec![(IOU, 4)]);
        assert_eq!(out.warnings.len(), 1);
    }

    #[test]
    fn skips_when_no_code_line_in_window() {
        let file = synthetic_file("x;\n\n\n\n");
        let out = inject_at_lines(&file, &[(IOU, 2)], 2).unwrap();
        assert_eq!(out.file.text, file.text);
        assert!(out.injected.is_empty());
        assert_eq!(out.warnings.len(), 1);
    }

    #[test]
    fn out_of_range_line_is_an_error() {
        let file = synthetic_file("x;\n");
        assert!(matches!(
            inject_at_lines(&file, &[(IOU, 9)], 5),
            Err(LabelError::LineOutOfRange { line: 9, .. })
        ));
    }

    #[test]
    fn strip_restores_listing_example() {
        let (clean, removed) = strip_labels("    <IOU>lockTime[msg.sender] += _seconds;\n");
        assert_eq!(clean, "    lockTime[msg.sender] += _seconds;\n");
        assert_eq!(removed, vec![(IOU, 1)]);
    }

    #[test]
    fn strip_without_labels_is_identity() {
        let text = "contract A { function f() public {} }\n";
        let (clean, removed) = strip_labels(text);
        assert_eq!(clean, text);
        assert!(removed.is_empty());
    }

    #[test]
    fn strip_distinguishes_to_and_tod() {
        let (clean, removed) = strip_labels("<TOD>x\n<TO>y\n");
        assert_eq!(clean, "x\ny\n");
        assert_eq!(
            removed,
            vec![
                (VulnType::TransactionOrderDependency, 1),
                (VulnType::TxOrigin, 2)
            ]
        );
    }

    #[test]
    fn inject_then_strip_reports_lines() {
        let file = synthetic_file("a;\nb;\nc;\nd;\n");
        let out = inject_at_lines(
            &file,
            &[(IOU, 1), (VulnType::TxOrigin, 3), (IOU, 4)],
            5,
        )
        .unwrap();
        let (clean, removed) = strip_labels(&out.file.text);
        assert_eq!(clean, file.text);
        assert_eq!(removed.len(), 3);
        assert!(removed.contains(&(VulnType::TxOrigin, 3)));
    }

    prop_compose! {
        fn arb_code_file()(lines in prop::collection::vec("[a-z]{1,8}( [a-z]{1,8})?;", 1..20)) -> String {
            let mut s = String::new();
            for (i, l) in lines.iter().enumerate() {
                if i % 4 == 3 {
                    s.push_str("    ");
                }
                s.push_str(l);
                s.push('\n');
            }
            s
        }
    }

    proptest! {
        #[test]
        fn strip_inject_round_trip(
            text in arb_code_file(),
            picks in prop::collection::vec((0usize..10, 1usize..20), 0..6),
        ) {
            let file = synthetic_file(&text);
            let line_count = LineMap::new(&text).line_count();
            let targets: Vec<(VulnType, usize)> = picks
                .into_iter()
                .map(|(t, l)| (VulnType::ALL[t], (l % line_count) + 1))
                .collect();
            let out = inject_at_lines(&file, &targets, 5).unwrap();
            let (clean, removed) = strip_labels(&out.file.text);
            prop_assert_eq!(clean, text.clone());
            // injected multiset survives the round trip
            let mut injected = out.injected.clone();
            let mut removed = removed;
            injected.sort();
            removed.sort();
            prop_assert_eq!(injected, removed);
            // line count unchanged
            prop_assert_eq!(
                LineMap::new(&out.file.text).line_count(),
                line_count
            );
        }
    }
}
