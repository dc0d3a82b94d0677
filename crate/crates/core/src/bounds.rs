//! Closed-form attack-power bounds, the Gaussian rate/capacity pairing they
//! come from, entropy power, and noise-induced distortion predictions.
//!
//! All logarithms are natural; rate and capacity are always compared in the
//! same base so the choice cancels.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::{Error, Result};

/// Parameters shared by the semantic and classical bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// source dimension
    pub m: usize,
    /// real channel dimensions
    pub n: usize,
    /// noise variance per channel dimension
    pub sigma_w2: f64,
    /// nominal SNR (linear), `|h|²/σ²_ω`
    pub eta: f64,
    /// decoder Lipschitz constant
    pub lipschitz: f64,
    /// per-dimension entropy power of the source
    pub theta_x: f64,
    pub d_star: f64,
}

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.sigma_w2, self.eta, self.lipschitz, self.theta_x, self.d_star];
        if self.m == 0 || self.n == 0 || positive.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::Param(format!("bound parameters must be positive: {self:?}")));
        }
        Ok(())
    }

    pub fn with_d_star(self, d_star: f64) -> Self {
        Self { d_star, ..self }
    }

    /// `MΘ_x`, the distortion of the best zero-rate description.
    pub fn source_power(&self) -> f64 {
        self.m as f64 * self.theta_x
    }

    /// `MΘ_x(η + 1)^{−N/M}`, the least distortion the classical system can
    /// reach without attack.
    pub fn regime_lower_boundary(&self) -> f64 {
        self.source_power() * (self.eta + 1.0).powf(-(self.n as f64) / self.m as f64)
    }
}

/// `√D*/G − √(Nσ²_ω)`; the attack-power lower bound is its positive part
/// squared.
pub fn sem_bracket(p: &SystemParams) -> f64 {
    p.d_star.sqrt() / p.lipschitz - (p.n as f64 * p.sigma_w2).sqrt()
}

/// Least power any perturbation needs to push the semantic decoder to `D*`.
/// Zero when the channel noise alone already allows `D*`.
pub fn sem_attack_lower_bound(p: &SystemParams) -> f64 {
    sem_bracket(p).max(0.0).powi(2)
}

/// The bracketed classical expression `ηNσ²/((MΘ/D*)^{M/N} − 1) − Nσ²`,
/// evaluated in every regime (negative in regimes I and III).
pub fn sscc_expression(p: &SystemParams) -> f64 {
    let ns2 = p.n as f64 * p.sigma_w2;
    let denom = (p.source_power() / p.d_star).powf(p.m as f64 / p.n as f64) - 1.0;
    p.eta * ns2 / denom - ns2
}

/// Power of an AWGN attack that pushes an ideal separate source-channel
/// system to `D*`; an upper bound on the minimum attack power.
///
/// `None` when `D* ≥ MΘ_x`: the system cannot reach `D*` even unattacked
/// and no finite positive bound exists. Negative values mean no attack
/// power is needed.
pub fn sscc_attack_upper_bound(p: &SystemParams) -> Option<f64> {
    (p.d_star < p.source_power()).then(|| sscc_expression(p))
}

/// `(N/2)·ln(1 + ηNσ²/(Nσ² + ρ_a))`, nats per frame.
pub fn capacity_under_awgn_attack(p: &SystemParams, rho_a: f64) -> f64 {
    let ns2 = p.n as f64 * p.sigma_w2;
    0.5 * p.n as f64 * (1.0 + p.eta * ns2 / (ns2 + rho_a)).ln()
}

/// Gaussian-bound rate-distortion `(M/2)·ln(MΘ_x/D)`, nats per frame.
pub fn rate_distortion(p: &SystemParams, d: f64) -> f64 {
    0.5 * p.m as f64 * (p.source_power() / d).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    I,
    II,
    III,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegimeReport {
    pub regime: Regime,
    /// semantic lower bound
    pub lhs: f64,
    /// the bracket squared without the positive-part clamp
    pub lhs_unclamped: f64,
    /// classical bracketed expression
    pub rhs: f64,
    pub condition_holds: bool,
    pub boundaries: (f64, f64),
}

/// Sufficient condition for the semantic system to need at least as much
/// attack power as the classical one at the same `D*`.
pub fn robustness_condition(p: &SystemParams) -> Result<RegimeReport> {
    p.validate()?;
    let (lo, hi) = (p.regime_lower_boundary(), p.source_power());
    let regime = if p.d_star < lo {
        Regime::I
    } else if p.d_star < hi {
        Regime::II
    } else {
        Regime::III
    };
    // at D* = MΘ_x the classical expression diverges
    let rhs = if p.d_star == hi { f64::INFINITY } else { sscc_expression(p) };
    let lhs = sem_attack_lower_bound(p);
    Ok(RegimeReport {
        regime,
        lhs,
        lhs_unclamped: sem_bracket(p).powi(2),
        rhs,
        // the classical expression is negative outside regime II; at exactly
        // D* = MΘ_x it diverges but no finite classical attack exists either
        condition_holds: regime != Regime::II || lhs >= rhs,
        boundaries: (lo, hi),
    })
}

/// Per-dimension entropy power of an i.i.d. Gaussian source: its variance.
pub fn entropy_power_gaussian(variance_per_dim: f64) -> Result<f64> {
    if !(variance_per_dim > 0.0) {
        return Err(Error::Param("variance must be positive".into()));
    }
    Ok(variance_per_dim)
}

/// `exp(2h/M)/(2πe)` for a differential entropy `h` in nats.
pub fn entropy_power_from_entropy(h_nats: f64, m: usize) -> f64 {
    (2.0 * h_nats / m as f64).exp() / (2.0 * std::f64::consts::PI * std::f64::consts::E)
}

/// Kozachenko–Leonenko nearest-neighbour estimate of differential entropy
/// (nats) with `k = 1`. Duplicate points are skipped.
pub fn kl_entropy(samples: &[Vec<f64>]) -> Result<f64> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::Param("need at least two samples".into()));
    }
    let d = samples[0].len();
    if d == 0 || samples.iter().any(|s| s.len() != d) {
        return Err(Error::Param("samples must share a positive dimension".into()));
    }
    let mut log_sum = 0.0;
    let mut used = 0usize;
    for (i, a) in samples.iter().enumerate() {
        let nearest = samples
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, b)| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        if nearest > 0.0 {
            log_sum += 0.5 * nearest.ln();
            used += 1;
        }
    }
    if used == 0 {
        return Err(Error::Param("all samples coincide".into()));
    }
    let df = d as f64;
    let log_unit_ball = 0.5 * df * std::f64::consts::PI.ln() - ln_gamma(0.5 * df + 1.0);
    Ok(digamma(n as f64) - digamma(1.0) + log_unit_ball + df * log_sum / used as f64)
}

/// Estimated per-dimension entropy power of `samples`.
pub fn entropy_power_estimate(samples: &[Vec<f64>]) -> Result<f64> {
    Ok(entropy_power_from_entropy(kl_entropy(samples)?, samples[0].len()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoiseDistortionPrediction {
    /// `σ²_ω · mean Σ_i σ_i²`
    pub predicted: f64,
    /// `N σ²_ω Ĝ²` with `Ĝ` the largest sampled singular value
    pub bound: f64,
    pub g_hat: f64,
}

/// First-order noise-induced distortion from per-sample Jacobian singular
/// values.
pub fn d_sem0_predict(singular_values: &[Vec<f64>], sigma_w2: f64, n: usize) -> Result<NoiseDistortionPrediction> {
    if singular_values.is_empty() {
        return Err(Error::Param("no Jacobian samples".into()));
    }
    let mean_sq = singular_values
        .iter()
        .map(|s| s.iter().map(|v| v * v).sum::<f64>())
        .sum::<f64>()
        / singular_values.len() as f64;
    let g_hat = singular_values
        .iter()
        .flat_map(|s| s.iter().copied())
        .fold(0.0, f64::max);
    Ok(NoiseDistortionPrediction {
        predicted: sigma_w2 * mean_sq,
        bound: n as f64 * sigma_w2 * g_hat * g_hat,
        g_hat,
    })
}
