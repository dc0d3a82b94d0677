//! Brute-force oracles shared by the feature property tests and the
//! acceptance run.

#![allow(dead_code)]

use std::collections::VecDeque;

/// Counts, for each variable node, the 4-cycles `v_i–c_a–v_j–c_b–v_i`
/// through it by enumerating every `(j, a < b)`.
pub fn four_cycles_exhaustive(d: &[Vec<u8>]) -> Vec<f64> {
    let (m, n) = (d.len(), d[0].len());
    (0..n)
        .map(|i| {
            let mut count = 0;
            for j in (0..n).filter(|&j| j != i) {
                for a in 0..m {
                    for b in a + 1..m {
                        if d[a][i] & d[b][i] & d[a][j] & d[b][j] == 1 {
                            count += 1;
                        }
                    }
                }
            }
            count as f64
        })
        .collect()
}

/// Variable nodes at Tanner-graph distance exactly 2 from each node, found
/// by breadth-first search over `n` variable and `m` check vertices.
pub fn two_hop_bfs(d: &[Vec<u8>]) -> Vec<f64> {
    let (m, n) = (d.len(), d[0].len());
    let adj: Vec<Vec<usize>> = (0..n + m)
        .map(|u| {
            if u < n {
                (0..m).filter(|&c| d[c][u] == 1).map(|c| n + c).collect()
            } else {
                (0..n).filter(|&v| d[u - n][v] == 1).collect()
            }
        })
        .collect();
    (0..n)
        .map(|s| {
            let mut dist = vec![usize::MAX; n + m];
            dist[s] = 0;
            let mut queue = VecDeque::from([s]);
            while let Some(u) = queue.pop_front() {
                for &w in &adj[u] {
                    if dist[w] == usize::MAX {
                        dist[w] = dist[u] + 1;
                        queue.push_back(w);
                    }
                }
            }
            (0..n).filter(|&v| dist[v] == 2).count() as f64
        })
        .collect()
}

/// The SVD feature recomputed from an independent SVD, with the same
/// elbow rule applied to its singular values. Cases whose selected
/// subspace has nearly repeated singular values are skipped (their
/// singular vectors are not unique), as are exact elbow ties.
pub fn svd_feature_oracle(d: &[Vec<u8>], eps: f64) -> Option<(Vec<f64>, usize)> {
    let (m, n) = (d.len(), d[0].len());
    let a = nalgebra::DMatrix::from_fn(m, n, |r, c| d[r][c] as f64);
    let svd = a.svd(false, true);
    let v_t = svd.v_t.unwrap();
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&x, &y| svd.singular_values[y].total_cmp(&svd.singular_values[x]));
    let s: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    if s.is_empty() || s[0] == 0.0 {
        return Some((vec![0.0; n], 0));
    }
    let r = s.iter().take_while(|&&x| x > 1e-10 * s[0]).count();
    let window = r.div_ceil(4).min(r.saturating_sub(1));
    let ratios: Vec<f64> = (1..=window).map(|j| s[r - j - 1] / s[r - j]).collect();
    let (mut best, mut k) = (0.0, 0);
    for (j, &ratio) in ratios.iter().enumerate() {
        if ratio > best {
            (best, k) = (ratio, j + 1);
        }
    }
    // an elbow tie or a ratio on the flat-tail threshold is decided by rounding
    let near = |a: f64, b: f64| (a - b).abs() < 1e-9 * b;
    if ratios.iter().enumerate().any(|(j, &q)| j + 1 != k && near(q, best)) || near(best, 1.5) {
        return None;
    }
    if r <= 1 {
        k = r;
    } else if best < 1.5 {
        k = r.div_ceil(10);
    }
    // the cut and every selected value must be simple
    for idx in (r - k).saturating_sub(1)..r {
        for other in 0..s.len() {
            if other != idx && (s[other] - s[idx]).abs() < 1e-6 * s[0] {
                return None;
            }
        }
    }
    let mut phi = vec![0.0; n];
    for &col in &order[r - k..r] {
        let w = 1.0 / (svd.singular_values[col] + eps);
        for (j, p) in phi.iter_mut().enumerate() {
            *p += v_t[(col, j)].abs() * w;
        }
    }
    Some((phi, k))
}
