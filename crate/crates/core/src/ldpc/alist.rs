use std::fmt::Write as _;

use super::ParityCheckMatrix;
use crate::error::{Error, Result};

/// Serializes `h` in MacKay alist format (1-based indices, zero padding).
pub fn write_alist(h: &ParityCheckMatrix) -> String {
    let cw = h.column_weights();
    let rw = h.row_weights();
    let max_c = cw.iter().copied().max().unwrap_or(0);
    let max_r = rw.iter().copied().max().unwrap_or(0);
    let mut out = String::new();
    let join = |xs: &mut dyn Iterator<Item = usize>| xs.map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
    let _ = writeln!(out, "{} {}", h.n(), h.m());
    let _ = writeln!(out, "{max_c} {max_r}");
    let _ = writeln!(out, "{}", join(&mut cw.iter().copied()));
    let _ = writeln!(out, "{}", join(&mut rw.iter().copied()));
    for v in 0..h.n() {
        let checks = h.var_checks(v);
        let mut it = checks.iter().map(|c| c + 1).chain(std::iter::repeat_n(0, max_c - checks.len()));
        let _ = writeln!(out, "{}", join(&mut it));
    }
    for c in 0..h.m() {
        let vars = h.check(c);
        let mut it = vars.iter().map(|v| v + 1).chain(std::iter::repeat_n(0, max_r - vars.len()));
        let _ = writeln!(out, "{}", join(&mut it));
    }
    out
}

/// Parses MacKay alist text. Column and row lists must agree.
pub fn read_alist(text: &str) -> Result<ParityCheckMatrix> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    let mut next_nums = |what: &str| -> Result<Vec<usize>> {
        let line = lines
            .next()
            .ok_or_else(|| Error::Format(format!("alist truncated before {what}")))?;
        line.split_whitespace()
            .map(|t| {
                t.parse::<usize>()
                    .map_err(|e| Error::Format(format!("bad integer {t:?} in {what}: {e}")))
            })
            .collect()
    };
    let header = next_nums("header")?;
    let [n, m] = header[..] else {
        return Err(Error::Format("alist header must hold n and m".into()));
    };
    let _max = next_nums("max weights")?;
    let cw = next_nums("column weights")?;
    let rw = next_nums("row weights")?;
    if cw.len() != n || rw.len() != m {
        return Err(Error::Format("weight list lengths disagree with header".into()));
    }
    let mut col_lists = Vec::with_capacity(n);
    for v in 0..n {
        let entries: Vec<usize> = next_nums("column list")?.into_iter().filter(|&x| x != 0).collect();
        if entries.len() != cw[v] {
            return Err(Error::Format(format!("column {v} lists {} checks, weight says {}", entries.len(), cw[v])));
        }
        col_lists.push(entries);
    }
    let mut rows = Vec::with_capacity(m);
    for c in 0..m {
        let entries: Vec<usize> = next_nums("row list")?.into_iter().filter(|&x| x != 0).collect();
        if entries.len() != rw[c] {
            return Err(Error::Format(format!("row {c} lists {} variables, weight says {}", entries.len(), rw[c])));
        }
        if entries.iter().any(|&v| v > n) {
            return Err(Error::Format(format!("row {c} references a variable beyond n={n}")));
        }
        rows.push(entries.into_iter().map(|v| v - 1).collect());
    }
    let h = ParityCheckMatrix::new(n, rows)?;
    for (v, list) in col_lists.iter().enumerate() {
        let mut want: Vec<usize> = list.iter().map(|c| c - 1).collect();
        want.sort_unstable();
        if want != h.var_checks(v) {
            return Err(Error::Format(format!("column {v} disagrees with the row lists")));
        }
    }
    Ok(h)
}
