//! Minimal line-based unified diff, used to render constrained vs
//! unconstrained completions side by side.

/// Unified-diff text between `old` and `new` with `context` lines of
/// surrounding context. Returns an empty string when the inputs are equal.
pub fn unified_diff(old: &str, new: &str, context: usize) -> String {
    let a: Vec<&str> = old.lines().collect();
    let b: Vec<&str> = new.lines().collect();
    if a == b {
        return String::new();
    }

    // LCS table; inputs here are short completions, so quadratic is fine
    let mut lcs = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for i in (0..a.len()).rev() {
        for j in (0..b.len()).rev() {
            lcs[i][j] = if a[i] == b[j] {
                lcs[i + 1][j + 1] + 1
            } else {
                lcs[i + 1][j].max(lcs[i][j + 1])
            };
        }
    }

    #[derive(PartialEq, Clone, Copy)]
    enum Op {
        Keep,
        Del,
        Add,
    }
    let mut ops: Vec<(Op, usize, usize)> = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        if a[i] == b[j] {
            ops.push((Op::Keep, i, j));
            i += 1;
            j += 1;
        } else if lcs[i + 1][j] >= lcs[i][j + 1] {
            ops.push((Op::Del, i, j));
            i += 1;
        } else {
            ops.push((Op::Add, i, j));
            j += 1;
        }
    }
    while i < a.len() {
        ops.push((Op::Del, i, j));
        i += 1;
    }
    while j < b.len() {
        ops.push((Op::Add, i, j));
        j += 1;
    }

    // group changed ops into hunks with shared context
    let mut out = String::new();
    let mut idx = 0;
    while idx < ops.len() {
        if ops[idx].0 == Op::Keep {
            idx += 1;
            continue;
        }
        let mut end = idx;
        let mut keep_run = 0;
        for (k, op) in ops.iter().enumerate().skip(idx) {
            if op.0 == Op::Keep {
                keep_run += 1;
                if keep_run > context * 2 {
                    break;
                }
            } else {
                keep_run = 0;
                end = k;
            }
        }
        let start = idx.saturating_sub(context);
        let stop = (end + 1 + context).min(ops.len());

        let (_, a_start, b_start) = ops[start];
        let a_count = ops[start..stop]
            .iter()
            .filter(|(op, _, _)| *op != Op::Add)
            .count();
        let b_count = ops[start..stop]
            .iter()
            .filter(|(op, _, _)| *op != Op::Del)
            .count();
        out.push_str(&format!(
            "@@ -{},{} +{},{} @@\n",
            a_start + 1,
            a_count,
            b_start + 1,
            b_count
        ));
        for &(op, ai, bi) in &ops[start..stop] {
            match op {
                Op::Keep => {
                    out.push(' ');
                    out.push_str(a[ai]);
                }
                Op::Del => {
                    out.push('-');
                    out.push_str(a[ai]);
                }
                Op::Add => {
                    out.push('+');
                    out.push_str(b[bi]);
                }
            }
            out.push('\n');
        }
        idx = stop;
    }
    out
}
