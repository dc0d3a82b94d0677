use super::ParityCheckMatrix;
use crate::error::{check_len, Result};

/// Packed GF(2) row.
#[derive(Debug, Clone, PartialEq, Eq)]
struct BitRow(Vec<u64>);

impl BitRow {
    fn zeros(len: usize) -> Self {
        BitRow(vec![0; len.div_ceil(64)])
    }

    fn get(&self, i: usize) -> bool {
        (self.0[i / 64] >> (i % 64)) & 1 == 1
    }

    fn set(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }

    fn xor_assign(&mut self, other: &BitRow) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a ^= b;
        }
    }
}

fn packed_rows(h: &ParityCheckMatrix) -> Vec<BitRow> {
    h.checks()
        .iter()
        .map(|row| {
            let mut b = BitRow::zeros(h.n());
            row.iter().for_each(|&v| b.set(v));
            b
        })
        .collect()
}

/// Reduced row echelon form in place; returns the pivot column of each
/// independent row, in row order.
fn rref(rows: &mut Vec<BitRow>, ncols: usize) -> Vec<usize> {
    let mut pivots = Vec::new();
    let mut r = 0;
    for col in 0..ncols {
        if r == rows.len() {
            break;
        }
        let Some(p) = (r..rows.len()).find(|&i| rows[i].get(col)) else {
            continue;
        };
        rows.swap(r, p);
        let pivot_row = rows[r].clone();
        for (i, row) in rows.iter_mut().enumerate() {
            if i != r && row.get(col) {
                row.xor_assign(&pivot_row);
            }
        }
        pivots.push(col);
        r += 1;
    }
    rows.truncate(r);
    pivots
}

/// Rank of `h` over GF(2).
pub fn gf2_rank(h: &ParityCheckMatrix) -> usize {
    let mut rows = packed_rows(h);
    rref(&mut rows, h.n()).len()
}

/// Systematic encoder derived from a parity-check matrix.
///
/// Information bits occupy the non-pivot columns of the row-reduced `H`;
/// each pivot (parity) bit is the GF(2) sum of the information bits its
/// reduced row touches.
#[derive(Debug, Clone)]
pub struct GeneratorMatrix {
    n: usize,
    info_positions: Vec<usize>,
    parity_positions: Vec<usize>,
    /// one entry per parity bit: indices into the information word
    parity_taps: Vec<Vec<usize>>,
}

impl GeneratorMatrix {
    pub fn k(&self) -> usize {
        self.info_positions.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn info_positions(&self) -> &[usize] {
        &self.info_positions
    }

    /// Codeword for `info` (length `k`), in original column order.
    pub fn encode(&self, info: &[u8]) -> Result<Vec<u8>> {
        check_len(self.k(), info.len())?;
        let mut cw = vec![0u8; self.n];
        for (&pos, &b) in self.info_positions.iter().zip(info) {
            cw[pos] = b & 1;
        }
        for (&pos, taps) in self.parity_positions.iter().zip(&self.parity_taps) {
            cw[pos] = taps.iter().fold(0, |acc, &j| acc ^ (info[j] & 1));
        }
        Ok(cw)
    }

    /// Information bits carried by a codeword.
    pub fn extract_info(&self, codeword: &[u8]) -> Vec<u8> {
        self.info_positions.iter().map(|&p| codeword[p]).collect()
    }

    /// Generator rows (`k × n`, original column order): row `i` encodes the
    /// `i`-th unit information word.
    pub fn rows(&self) -> Vec<Vec<u8>> {
        (0..self.k())
            .map(|i| {
                let mut unit = vec![0u8; self.k()];
                unit[i] = 1;
                self.encode(&unit).expect("unit word has length k")
            })
            .collect()
    }
}

/// Systematic generator for `h`, plus the column permutation
/// (information positions followed by parity positions).
///
/// Linearly dependent checks are dropped, so `k = n − rank(H)`.
pub fn to_generator(h: &ParityCheckMatrix) -> (GeneratorMatrix, Vec<usize>) {
    let n = h.n();
    let mut rows = packed_rows(h);
    let pivots = rref(&mut rows, n);
    if pivots.len() < h.m() {
        log::debug!(
            "parity-check matrix has {} dependent rows; k = {}",
            h.m() - pivots.len(),
            n - pivots.len()
        );
    }
    let mut is_pivot = vec![false; n];
    pivots.iter().for_each(|&p| is_pivot[p] = true);
    let info_positions: Vec<usize> = (0..n).filter(|&c| !is_pivot[c]).collect();
    let mut info_index = vec![usize::MAX; n];
    for (i, &c) in info_positions.iter().enumerate() {
        info_index[c] = i;
    }
    let parity_taps = rows
        .iter()
        .map(|row| {
            info_positions
                .iter()
                .filter(|&&c| row.get(c))
                .map(|&c| info_index[c])
                .collect()
        })
        .collect();
    let mut perm = info_positions.clone();
    perm.extend_from_slice(&pivots);
    (
        GeneratorMatrix {
            n,
            info_positions,
            parity_positions: pivots,
            parity_taps,
        },
        perm,
    )
}
