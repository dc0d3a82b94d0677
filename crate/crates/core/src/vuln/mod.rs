//! Offline Tanner-graph vulnerability analysis: per-variable structural
//! features, min-max fusion and adaptive selection of the vulnerable set.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ldpc::ParityCheckMatrix;
use crate::math::{percentile, svd, RealMatrix};

pub const DEFAULT_EPS: f64 = 1e-6;
/// Singular values below this fraction of the largest are numerically zero.
const RANK_TOL: f64 = 1e-10;
const FLAT_RATIO: f64 = 1.5;

/// Fusion weights `(w_deg, w_hop, w_cyc, w_svd)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureWeights(pub [f64; 4]);

impl Default for FeatureWeights {
    /// Degree carries no information on a regular code.
    fn default() -> Self {
        FeatureWeights([0.0, 1.0, 0.35, 0.25])
    }
}

/// Raw (unnormalized) structural features, one entry per variable node.
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    pub degree: Vec<f64>,
    pub two_hop: Vec<f64>,
    pub four_cycle: Vec<f64>,
    pub svd: Vec<f64>,
    pub svd_k: usize,
}

impl Features {
    pub fn compute(h: &ParityCheckMatrix, eps: f64) -> Result<Self> {
        let (svd, svd_k) = svd_feature(h, eps)?;
        Ok(Self {
            degree: degree_feature(h),
            two_hop: two_hop_feature(h),
            four_cycle: four_cycle_feature(h),
            svd,
            svd_k,
        })
    }

    fn as_array(&self) -> [&[f64]; 4] {
        [&self.degree, &self.two_hop, &self.four_cycle, &self.svd]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VulnerabilityProfile {
    pub features: Features,
    pub weights: FeatureWeights,
    /// fused score φ
    pub phi: Vec<f64>,
    pub tau: f64,
    /// sorted indices `{ i : φ_i ≥ τ }`
    pub vulnerable_set: Vec<usize>,
}

impl VulnerabilityProfile {
    pub fn n(&self) -> usize {
        self.phi.len()
    }

    pub fn membership(&self) -> Vec<bool> {
        let mut m = vec![false; self.n()];
        self.vulnerable_set.iter().for_each(|&i| m[i] = true);
        m
    }

    /// Plain-text audit report: one line per node plus a header.
    pub fn report(&self) -> String {
        let f = &self.features;
        let member = self.membership();
        let mut s = String::new();
        let _ = writeln!(
            s,
            "# n={} tau={:.6} |T|={} svd_k={} weights={:?}",
            self.n(),
            self.tau,
            self.vulnerable_set.len(),
            f.svd_k,
            self.weights.0
        );
        let _ = writeln!(s, "node,degree,two_hop,four_cycle,svd,phi,vulnerable");
        for i in 0..self.n() {
            let _ = writeln!(
                s,
                "{i},{},{},{},{:.6e},{:.6},{}",
                f.degree[i],
                f.two_hop[i],
                f.four_cycle[i],
                f.svd[i],
                self.phi[i],
                u8::from(member[i])
            );
        }
        s
    }
}

/// Column weight of each variable node.
pub fn degree_feature(h: &ParityCheckMatrix) -> Vec<f64> {
    h.column_weights().into_iter().map(|w| w as f64).collect()
}

/// Size of the two-hop variable neighbourhood, excluding the node itself.
pub fn two_hop_feature(h: &ParityCheckMatrix) -> Vec<f64> {
    let mut mark = vec![usize::MAX; h.n()];
    (0..h.n())
        .map(|i| {
            let mut count = 0;
            mark[i] = i;
            for &c in h.var_checks(i) {
                for &v in h.check(c) {
                    if mark[v] != i {
                        mark[v] = i;
                        count += 1;
                    }
                }
            }
            count as f64
        })
        .collect()
}

/// `Σ_{j≠i} C(K_ij, 2)`, `K_ij` = number of checks shared by nodes i and j.
pub fn four_cycle_feature(h: &ParityCheckMatrix) -> Vec<f64> {
    let mut shared = vec![0usize; h.n()];
    let mut touched = Vec::new();
    (0..h.n())
        .map(|i| {
            for &c in h.var_checks(i) {
                for &v in h.check(c) {
                    if v != i {
                        if shared[v] == 0 {
                            touched.push(v);
                        }
                        shared[v] += 1;
                    }
                }
            }
            let total: usize = touched.iter().map(|&v| shared[v] * (shared[v] - 1) / 2).sum();
            touched.drain(..).for_each(|v| shared[v] = 0);
            total as f64
        })
        .collect()
}

/// Weak-direction participation from the SVD of `H` seen as a real matrix.
pub fn svd_feature(h: &ParityCheckMatrix, eps: f64) -> Result<(Vec<f64>, usize)> {
    svd_feature_dense(&h.to_dense(), eps)
}

/// `φ_j = Σ_{i=1..k} |V_{j,r−i+1}| / (σ_{r−i+1} + eps)` over the `k` smallest
/// nonzero singular values of `m` (`r` = numerical rank).
///
/// `k` sits at the elbow: among the smallest `⌈r/4⌉` values, the largest
/// ratio `σ_{r−k} / σ_{r−k+1}` marks the cut. A flat tail (largest ratio
/// below 1.5) falls back on `k = ⌈r/10⌉`.
pub fn svd_feature_dense(m: &RealMatrix, eps: f64) -> Result<(Vec<f64>, usize)> {
    if !(eps > 0.0) {
        return Err(Error::Param("eps must be positive".into()));
    }
    let n = m.cols();
    if m.data().iter().all(|&v| v == 0.0) {
        return Ok((vec![0.0; n], 0));
    }
    let d = svd(m)?;
    let smax = d.s[0];
    let r = d.s.iter().take_while(|&&s| s > RANK_TOL * smax).count();
    let k = elbow(&d.s[..r]);
    let mut phi = vec![0.0; n];
    for col in (r - k)..r {
        let w = 1.0 / (d.s[col] + eps);
        for (j, p) in phi.iter_mut().enumerate() {
            *p += d.v[(j, col)].abs() * w;
        }
    }
    Ok((phi, k))
}

/// Elbow count over a descending list of nonzero singular values.
fn elbow(s: &[f64]) -> usize {
    let r = s.len();
    if r <= 1 {
        return r;
    }
    let window = r.div_ceil(4).min(r - 1);
    let mut best = (0.0, 0);
    for j in 1..=window {
        // σ_{r−j} / σ_{r−j+1} in one-based indexing
        let ratio = s[r - j - 1] / s[r - j];
        if ratio > best.0 {
            best = (ratio, j);
        }
    }
    if best.0 < FLAT_RATIO {
        r.div_ceil(10)
    } else {
        best.1
    }
}

/// Min-max normalization; a constant feature maps to zeros.
pub fn min_max(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| (v - lo) / (hi - lo)).collect()
}

/// Threshold rule: `μ + 2σ` when the scores are tight (`σ < 0.1`), else
/// the 85th percentile; clipped into `[P70, P95]`.
pub fn adaptive_threshold(phi: &[f64]) -> f64 {
    let n = phi.len() as f64;
    let mu = phi.iter().sum::<f64>() / n;
    let sd = (phi.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n).sqrt();
    let initial = if sd < 0.1 { mu + 2.0 * sd } else { percentile(phi, 85.0) };
    initial.clamp(percentile(phi, 70.0), percentile(phi, 95.0))
}

pub fn fuse_and_select(features: Features, weights: FeatureWeights) -> Result<VulnerabilityProfile> {
    let n = features.degree.len();
    if n == 0 {
        return Err(Error::Param("no variable nodes".into()));
    }
    if features.as_array().iter().any(|f| f.len() != n) {
        return Err(Error::Param("feature lists differ in length".into()));
    }
    let normalized: Vec<Vec<f64>> = features.as_array().iter().map(|f| min_max(f)).collect();
    let phi: Vec<f64> = (0..n)
        .map(|i| (0..4).map(|f| weights.0[f] * normalized[f][i]).sum())
        .collect();
    let tau = adaptive_threshold(&phi);
    let vulnerable_set = (0..n).filter(|&i| phi[i] >= tau).collect();
    Ok(VulnerabilityProfile {
        features,
        weights,
        phi,
        tau,
        vulnerable_set,
    })
}

/// Features, fusion and selection in one call.
pub fn analyze(h: &ParityCheckMatrix, weights: FeatureWeights, eps: f64) -> Result<VulnerabilityProfile> {
    fuse_and_select(Features::compute(h, eps)?, weights)
}
