//! Vulnerable-set attack on the classical chain.
//!
//! Each step pushes every received symbol against the gradient of its
//! LLR confidence `f(r_i) = Σ_b |L_b|`, with unit-norm directions scaled by
//! `η·(1 + e·𝟙[i ∈ T])`. Gradients come from symmetric finite differences
//! on the current perturbed signal.
//!
//! The confidence uses unclipped exact LLRs: the decoder's ±25 clip would
//! flatten `f` around every confidently received symbol at high SNR and
//! leave the attack without a direction there.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::attack::{AttackResult, TraceEntry};
use crate::classical::{ClassicalChain, SignalFrame};
use crate::error::{Error, Result};
use crate::modem::{ChannelParams, Constellation};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VsAttackConfig {
    /// per-step magnitude relative to the received RMS amplitude `h_mag`
    pub eta_rel: f64,
    pub extra_weight_e: f64,
    pub eps_div: f64,
    pub fd_scale: f64,
    pub max_steps: usize,
}

impl Default for VsAttackConfig {
    fn default() -> Self {
        Self {
            eta_rel: 0.01,
            extra_weight_e: 9.0,
            eps_div: 1e-6,
            fd_scale: 1e-6,
            max_steps: 5000,
        }
    }
}

impl VsAttackConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta_rel > 0.0 && self.eps_div > 0.0 && self.fd_scale > 0.0) {
            return Err(Error::Param("eta_rel, eps_div and fd_scale must be positive".into()));
        }
        if !(self.extra_weight_e >= 0.0) {
            return Err(Error::Param("extra weight e must be non-negative".into()));
        }
        Ok(())
    }

    /// Absolute step size for a unit-power constellation seen through `ch`.
    pub fn eta_step(&self, ch: &ChannelParams) -> f64 {
        self.eta_rel * ch.h_mag
    }
}

/// When an attack run stops.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopRule {
    DecodeFailure,
    Distortion(f64),
}

/// `Σ_b |L_b(u)|` for an equalized symbol `u`.
pub fn symbol_confidence(c: &Constellation, u: Complex64, noise_var_eff: f64) -> f64 {
    let mut buf = [0.0; 4];
    let llr = &mut buf[..c.bits_per_symbol()];
    c.raw_llrs_into(u, noise_var_eff, llr);
    llr.iter().map(|l| l.abs()).sum()
}

/// `∂f/∂u_re + j·∂f/∂u_im` by symmetric differences with step
/// `fd_scale · max(1, |u|)`.
pub fn fd_gradient(c: &Constellation, u: Complex64, noise_var_eff: f64, fd_scale: f64) -> Complex64 {
    let eps = fd_scale * u.norm().max(1.0);
    let f = |v: Complex64| symbol_confidence(c, v, noise_var_eff);
    let dre = (f(u + Complex64::new(eps, 0.0)) - f(u - Complex64::new(eps, 0.0))) / (2.0 * eps);
    let dim = (f(u + Complex64::new(0.0, eps)) - f(u - Complex64::new(0.0, eps))) / (2.0 * eps);
    Complex64::new(dre, dim)
}

/// Total confidence of a received frame.
pub fn frame_confidence(c: &Constellation, y: &[Complex64], ch: &ChannelParams) -> f64 {
    let nve = ch.noise_var_eff();
    y.iter().map(|&r| symbol_confidence(c, r / ch.h_mag, nve)).sum()
}

/// One perturbation step on the current perturbed signal; returns the
/// power of the increment.
///
/// Gradients are taken on the equalized symbol `y/h`; the positive factor
/// `1/h` between that and the received-domain gradient leaves the unit
/// direction unchanged.
pub fn attack_step(
    frame: &mut SignalFrame,
    c: &Constellation,
    ch: &ChannelParams,
    targets: &[bool],
    cfg: &VsAttackConfig,
) -> f64 {
    let nve = ch.noise_var_eff();
    let eta = cfg.eta_step(ch);
    let mut added = 0.0;
    for i in 0..frame.len() {
        let u = (frame.clean[i] + frame.perturbation[i]) / ch.h_mag;
        let grad = fd_gradient(c, u, nve, cfg.fd_scale);
        let weight = 1.0 + if targets[i] { cfg.extra_weight_e } else { 0.0 };
        let step = -grad * (eta * weight / (grad.norm() + cfg.eps_div));
        frame.perturbation[i] += step;
        added += step.norm_sqr();
    }
    added
}

fn stop_met(rule: StopRule, converged: bool, distortion: f64) -> bool {
    match rule {
        StopRule::DecodeFailure => !converged,
        StopRule::Distortion(d_star) => distortion >= d_star,
    }
}

/// Iterates [`attack_step`] until the stop rule fires or `max_steps` runs out.
///
/// `targets` marks vulnerable symbols. ρ* is the power of the accumulated
/// perturbation `‖y − r‖²`, not the sum of step powers.
#[allow(clippy::too_many_arguments)]
pub fn run_vs_attack(
    chain: &ClassicalChain,
    x: &[f64],
    received: &[Complex64],
    ch: &ChannelParams,
    targets: &[bool],
    cfg: &VsAttackConfig,
    stop: StopRule,
    trace: bool,
) -> Result<AttackResult> {
    cfg.validate()?;
    crate::error::check_len(received.len(), targets.len())?;
    let (clean_d, rx) = chain.evaluate(x, received, ch);
    if stop_met(stop, rx.converged, clean_d) {
        return Ok(AttackResult::already_met(clean_d));
    }
    let mut frame = SignalFrame::new(received.to_vec());
    let mut result = AttackResult {
        rho_star: 0.0,
        steps: 0,
        success: false,
        clean_distortion: clean_d,
        final_distortion: clean_d,
        distortion_trace: vec![clean_d],
        trace: Vec::new(),
    };
    for step in 1..=cfg.max_steps {
        let added = attack_step(&mut frame, &chain.constellation, ch, targets, cfg);
        let y = frame.perturbed();
        let (d, rx) = chain.evaluate(x, &y, ch);
        result.steps = step;
        result.final_distortion = d;
        result.distortion_trace.push(d);
        result.rho_star = frame.power();
        if trace {
            result.trace.push(TraceEntry {
                step,
                added_power: added,
                cumulative_power: result.rho_star,
                distortion: d,
                confidence: Some(frame_confidence(&chain.constellation, &y, ch)),
                decoded: Some(rx.converged),
            });
        }
        if stop_met(stop, rx.converged, d) {
            result.success = true;
            break;
        }
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classical::CodeConfig;
    use crate::math::{complex_power, RngStream};
    use crate::modem::{transmit, Modulation};
    use crate::source::QuantizerSpec;

    /// Analytic ∂f/∂u from the log-sum-exp form, valid where no LLR is zero.
    fn analytic_gradient(c: &Constellation, u: Complex64, v: f64) -> Complex64 {
        let mut g = Complex64::new(0.0, 0.0);
        for b in 0..c.bits_per_symbol() {
            let mut num = [Complex64::new(0.0, 0.0); 2];
            let mut den = [0.0; 2];
            for (l, p) in c.points().iter().enumerate() {
                let w = (-(u - p).norm_sqr() / v).exp();
                let side = c.label_bit(l, b) as usize;
                num[side] += -2.0 * (u - p) / v * w;
                den[side] += w;
            }
            let dl = num[0] / den[0] - num[1] / den[1];
            let mut llr = [0.0; 4];
            c.raw_llrs_into(u, v, &mut llr[..c.bits_per_symbol()]);
            g += dl * llr[b].signum();
        }
        g
    }

    #[test]
    fn confidence_examples() {
        let q = Constellation::new(Modulation::Qpsk);
        assert_eq!(symbol_confidence(&q, Complex64::new(0.0, 0.0), 0.3), 0.0);
        let p = q.point(0);
        assert!(symbol_confidence(&q, p, 1e-3) >= 2.0 * 25.0 * 0.9);
        let mut rng = RngStream::new(1, 0);
        let c = Constellation::new(Modulation::Qam16);
        for _ in 0..100 {
            let u = Complex64::new(rng.normal(), rng.normal());
            let direct: f64 = c.bit_llrs(u, 5.0).iter().map(|l| l.abs()).sum();
            assert!((symbol_confidence(&c, u, 5.0) - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_matches_analytic_derivative() {
        let c = Constellation::new(Modulation::Qam16);
        let mut rng = RngStream::new(2, 0);
        let mut checked = 0;
        while checked < 200 {
            let u = Complex64::new(0.8 * rng.normal(), 0.8 * rng.normal());
            let mut llr = [0.0; 4];
            c.raw_llrs_into(u, 0.2, &mut llr);
            if llr.iter().any(|l| l.abs() < 0.5) {
                continue; // too close to a |·| kink
            }
            let fd = fd_gradient(&c, u, 0.2, 1e-6);
            let an = analytic_gradient(&c, u, 0.2);
            assert!((fd - an).norm() <= 1e-4 * an.norm().max(1.0), "{fd} vs {an}");
            // Richardson: error shrinks like ε², so doubling ε barely moves it
            let fd2 = fd_gradient(&c, u, 0.2, 2e-6);
            assert!((fd2 - fd).norm() <= 1e-5 * an.norm().max(1.0));
            checked += 1;
        }
        let q = Constellation::new(Modulation::Qpsk);
        assert_eq!(fd_gradient(&q, Complex64::new(0.0, 0.0), 0.5, 1e-6), Complex64::new(0.0, 0.0));
    }

    fn setup() -> (ClassicalChain, ChannelParams) {
        let q = QuantizerSpec {
            bits_per_sample: 3,
            lo: 0.0,
            hi: 1.0,
        };
        let chain = ClassicalChain::new(&CodeConfig::default(), q, 16, 4.36, &mut RngStream::new(1, 0)).unwrap();
        let ch = ChannelParams::from_snr_db(9.0, 2f64.sqrt()).unwrap();
        (chain, ch)
    }

    fn frame(chain: &ClassicalChain, ch: &ChannelParams, seed: u64) -> (Vec<f64>, Vec<Complex64>) {
        let mut rng = RngStream::new(seed, 7);
        let x: Vec<f64> = (0..16).map(|_| 0.5 + 0.15 * rng.normal()).collect();
        let r = transmit(&chain.encode(&x).unwrap(), ch, &mut rng);
        (x, r)
    }

    #[test]
    fn weighted_steps_are_ten_times_baseline() {
        let (chain, ch) = setup();
        let (_, r) = frame(&chain, &ch, 3);
        let cfg = VsAttackConfig::default();
        let mut a = SignalFrame::new(r.clone());
        let mut b = SignalFrame::new(r.clone());
        attack_step(&mut a, &chain.constellation, &ch, &vec![false; r.len()], &cfg);
        attack_step(&mut b, &chain.constellation, &ch, &vec![true; r.len()], &cfg);
        for (sa, sb) in a.perturbation.iter().zip(&b.perturbation) {
            assert!((sb.norm() - 10.0 * sa.norm()).abs() <= 1e-12 * sb.norm().max(1e-300));
        }
    }

    #[test]
    fn zero_gradient_gives_zero_step() {
        let c = Constellation::new(Modulation::Qpsk);
        let ch = ChannelParams::new(1.0, 0.5).unwrap();
        let mut f = SignalFrame::new(vec![Complex64::new(0.0, 0.0)]);
        let added = attack_step(&mut f, &c, &ch, &[true], &VsAttackConfig::default());
        assert_eq!(added, 0.0);
    }

    #[test]
    fn unweighted_step_power_is_unit_direction_algebra() {
        let (chain, ch) = setup();
        let (_, r) = frame(&chain, &ch, 4);
        let cfg = VsAttackConfig {
            extra_weight_e: 0.0,
            ..Default::default()
        };
        let eta = cfg.eta_step(&ch);
        let nve = ch.noise_var_eff();
        let expected: f64 = r
            .iter()
            .map(|&y| {
                let g = fd_gradient(&chain.constellation, y / ch.h_mag, nve, cfg.fd_scale).norm();
                (eta * g / (g + cfg.eps_div)).powi(2)
            })
            .sum();
        let mut f = SignalFrame::new(r.clone());
        let added = attack_step(&mut f, &chain.constellation, &ch, &vec![false; r.len()], &cfg);
        assert!((added - expected).abs() <= 1e-9 * expected);
        let nominal = r.len() as f64 * eta * eta;
        assert!((added - nominal).abs() <= 1e-6 * nominal);
    }

    #[test]
    fn small_step_reduces_confidence() {
        let (chain, ch) = setup();
        let cfg = VsAttackConfig {
            eta_rel: 1e-4,
            ..Default::default()
        };
        let mut improved = 0;
        for seed in 0..100 {
            let (_, r) = frame(&chain, &ch, 100 + seed);
            let before = frame_confidence(&chain.constellation, &r, &ch);
            let mut f = SignalFrame::new(r.clone());
            attack_step(&mut f, &chain.constellation, &ch, &vec![false; r.len()], &cfg);
            if frame_confidence(&chain.constellation, &f.perturbed(), &ch) < before {
                improved += 1;
            }
        }
        assert!(improved >= 95, "{improved}");
    }

    #[test]
    fn attack_breaks_decoder_with_exact_accounting() {
        let (chain, ch) = setup();
        let targets = vec![false; chain.n_sym()];
        for seed in 0..5 {
            let (x, r) = frame(&chain, &ch, 10 + seed);
            let res = run_vs_attack(
                &chain,
                &x,
                &r,
                &ch,
                &targets,
                &VsAttackConfig::default(),
                StopRule::DecodeFailure,
                true,
            )
            .unwrap();
            if res.steps == 0 {
                continue;
            }
            assert!(res.success);
            assert_eq!(res.trace.last().unwrap().decoded, Some(false));
            let powers: Vec<f64> = res.trace.iter().map(|t| t.cumulative_power).collect();
            assert!(powers.windows(2).take(5).all(|w| w[1] > w[0]));
            assert!((res.trace.last().unwrap().cumulative_power - res.rho_star).abs() < 1e-12);
            // replay the accumulated perturbation from scratch
            let mut f = SignalFrame::new(r.clone());
            for _ in 0..res.steps {
                attack_step(&mut f, &chain.constellation, &ch, &targets, &VsAttackConfig::default());
            }
            let direct = complex_power(&f.perturbed().iter().zip(&r).map(|(a, b)| a - b).collect::<Vec<_>>());
            assert!((direct - res.rho_star).abs() <= 1e-9 * res.rho_star);
        }
    }

    #[test]
    fn target_already_met_costs_nothing() {
        let (chain, ch) = setup();
        let (x, r) = frame(&chain, &ch, 20);
        let res = run_vs_attack(
            &chain,
            &x,
            &r,
            &ch,
            &vec![false; r.len()],
            &VsAttackConfig::default(),
            StopRule::Distortion(0.0),
            false,
        )
        .unwrap();
        assert_eq!((res.rho_star, res.steps, res.success), (0.0, 0, true));
    }
}
