//! Regular LDPC codes: Gallager construction, systematic GF(2) encoding,
//! log-domain sum-product decoding and alist I/O.

mod alist;
mod bp;
mod gf2;

pub use alist::{read_alist, write_alist};
pub use bp::{bp_decode, BpDecoder, DecodeOutcome, LLR_CLIP};
pub use gf2::{gf2_rank, to_generator, GeneratorMatrix};

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{RealMatrix, RngStream};

pub const DEFAULT_MAX_ITERS: usize = 50;

/// Sparse binary parity-check matrix, stored as per-check sorted index lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParityCheckMatrix {
    n: usize,
    rows: Vec<Vec<usize>>,
    cols: Vec<Vec<usize>>,
}

impl ParityCheckMatrix {
    pub fn new(n: usize, mut rows: Vec<Vec<usize>>) -> Result<Self> {
        let mut cols = vec![Vec::new(); n];
        for (c, row) in rows.iter_mut().enumerate() {
            row.sort_unstable();
            if row.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::Param(format!("check {c} lists a variable twice")));
            }
            if let Some(&v) = row.iter().find(|&&v| v >= n) {
                return Err(Error::Param(format!("check {c} references variable {v} >= n={n}")));
            }
            for &v in row.iter() {
                cols[v].push(c);
            }
        }
        Ok(Self { n, rows, cols })
    }

    /// Builds from a dense 0/1 matrix given row by row.
    pub fn from_dense(dense: &[Vec<u8>]) -> Result<Self> {
        let n = dense.first().map_or(0, |r| r.len());
        if dense.iter().any(|r| r.len() != n) {
            return Err(Error::Param("ragged dense matrix".into()));
        }
        let rows = dense
            .iter()
            .map(|r| r.iter().enumerate().filter(|(_, &b)| b != 0).map(|(i, _)| i).collect())
            .collect();
        Self::new(n, rows)
    }

    /// Number of checks.
    pub fn m(&self) -> usize {
        self.rows.len()
    }

    /// Number of variables (block length).
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn check(&self, c: usize) -> &[usize] {
        &self.rows[c]
    }

    pub fn checks(&self) -> &[Vec<usize>] {
        &self.rows
    }

    /// Checks adjacent to variable `v`, ascending.
    pub fn var_checks(&self, v: usize) -> &[usize] {
        &self.cols[v]
    }

    pub fn column_weights(&self) -> Vec<usize> {
        self.cols.iter().map(Vec::len).collect()
    }

    pub fn row_weights(&self) -> Vec<usize> {
        self.rows.iter().map(Vec::len).collect()
    }

    pub fn edge_count(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn to_dense(&self) -> RealMatrix {
        let mut m = RealMatrix::zeros(self.m(), self.n);
        for (c, row) in self.rows.iter().enumerate() {
            for &v in row {
                m[(c, v)] = 1.0;
            }
        }
        m
    }

    pub fn syndrome(&self, bits: &[u8]) -> Vec<u8> {
        debug_assert_eq!(bits.len(), self.n);
        self.rows
            .iter()
            .map(|row| row.iter().fold(0u8, |acc, &v| acc ^ (bits[v] & 1)))
            .collect()
    }

    pub fn is_codeword(&self, bits: &[u8]) -> bool {
        self.rows
            .iter()
            .all(|row| row.iter().fold(0u8, |acc, &v| acc ^ (bits[v] & 1)) == 0)
    }
}

/// Code rates supported by the regular construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CodeRate {
    #[serde(rename = "1/2")]
    Half,
    #[serde(rename = "2/3")]
    TwoThirds,
    #[serde(rename = "5/6")]
    FiveSixths,
}

impl CodeRate {
    pub fn fraction(self) -> (usize, usize) {
        match self {
            CodeRate::Half => (1, 2),
            CodeRate::TwoThirds => (2, 3),
            CodeRate::FiveSixths => (5, 6),
        }
    }

    pub fn value(self) -> f64 {
        let (a, b) = self.fraction();
        a as f64 / b as f64
    }
}

impl fmt::Display for CodeRate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (a, b) = self.fraction();
        write!(f, "{a}/{b}")
    }
}

impl FromStr for CodeRate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "1/2" => Ok(CodeRate::Half),
            "2/3" => Ok(CodeRate::TwoThirds),
            "5/6" => Ok(CodeRate::FiveSixths),
            other => Err(Error::Param(format!("unsupported code rate {other:?}"))),
        }
    }
}

/// Gallager-style regular `(col_weight, row_weight)` parity-check matrix.
///
/// The first band of `n / row_weight` checks covers consecutive column
/// blocks; each further band is a random column permutation of the first.
/// Short cycles are left in place. Column patterns are de-duplicated on a
/// best-effort basis (tiny codes cannot always avoid repeats).
pub fn build_regular_ldpc(
    n: usize,
    rate: CodeRate,
    col_weight: usize,
    rng: &mut RngStream,
) -> Result<ParityCheckMatrix> {
    let (num, den) = rate.fraction();
    if col_weight < 2 || n == 0 {
        return Err(Error::Param(format!(
            "need n > 0 and col_weight >= 2 (n={n}, col_weight={col_weight})"
        )));
    }
    let row_weight = col_weight * den / (den - num);
    if !(col_weight * den).is_multiple_of(den - num) || !n.is_multiple_of(row_weight) {
        return Err(Error::Param(format!(
            "n={n} is not a multiple of the row weight {row_weight} for rate {rate}, col_weight {col_weight}"
        )));
    }
    let band = n / row_weight;
    if band < 1 {
        return Err(Error::Param("code too short for the requested weights".into()));
    }

    let mut best: Option<(usize, Vec<Vec<usize>>)> = None;
    for _attempt in 0..200 {
        let mut rows = Vec::with_capacity(band * col_weight);
        for b in 0..col_weight {
            let mut perm: Vec<usize> = (0..n).collect();
            if b > 0 {
                rng.shuffle(&mut perm);
            }
            for r in 0..band {
                let mut row = perm[r * row_weight..(r + 1) * row_weight].to_vec();
                row.sort_unstable();
                rows.push(row);
            }
        }
        let dups = duplicate_columns(n, &rows);
        let better = best.as_ref().is_none_or(|(d, _)| dups < *d);
        if better {
            best = Some((dups, rows));
        }
        if dups == 0 {
            break;
        }
    }
    let (dups, rows) = best.expect("at least one attempt");
    if dups > 0 {
        log::debug!("regular LDPC n={n}: {dups} repeated column patterns remain");
    }
    ParityCheckMatrix::new(n, rows)
}

fn duplicate_columns(n: usize, rows: &[Vec<usize>]) -> usize {
    let mut cols = vec![Vec::new(); n];
    for (c, row) in rows.iter().enumerate() {
        for &v in row {
            cols[v].push(c);
        }
    }
    let mut seen: HashMap<Vec<usize>, usize> = HashMap::new();
    for col in cols {
        *seen.entry(col).or_default() += 1;
    }
    seen.values().map(|&k| k - 1).sum()
}
