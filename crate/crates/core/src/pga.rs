//! Attacks on a differentiable decoder `g`: progressive gradient ascent,
//! its small-step closed form, and a C&W-style penalty baseline.
//!
//! Distortion is `D(y) = ‖x − g(y)‖²` against the attacker's reference `x`.
//! The attacker perturbs the received vector `r` additively, `y = r + s`,
//! and pays `ρ = ‖s‖²`.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::attack::{AttackResult, TraceEntry};
use crate::error::{check_len, Error, Result};
use crate::math::{norm, RealMatrix};
use crate::nn::{DenseNetwork, VectorAdam};
use crate::source::squared_error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PgaConfig {
    pub alpha: f64,
    pub eps_norm: f64,
    pub max_iters: usize,
}

impl Default for PgaConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            eps_norm: 1e-8,
            max_iters: 10_000,
        }
    }
}

impl PgaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.eps_norm > 0.0) {
            return Err(Error::Param("PGA needs alpha > 0 and eps_norm > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CwConfig {
    pub c_init: f64,
    pub c_min: f64,
    pub c_max: f64,
    pub lr: f64,
    /// optimizer iterations per round
    pub max_iters: usize,
    pub kappa: f64,
    pub rounds: usize,
}

impl Default for CwConfig {
    fn default() -> Self {
        Self {
            c_init: 1.0,
            c_min: 1e-6,
            c_max: 100.0,
            lr: 0.01,
            max_iters: 2000,
            kappa: 0.0,
            rounds: 8,
        }
    }
}

impl CwConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c_min > 0.0 && self.c_min <= self.c_init && self.c_init <= self.c_max) {
            return Err(Error::Param("need 0 < c_min <= c_init <= c_max".into()));
        }
        if !(self.lr > 0.0) || self.rounds == 0 || !(self.kappa >= 0.0) {
            return Err(Error::Param("need lr > 0, rounds >= 1 and kappa >= 0".into()));
        }
        Ok(())
    }
}

/// `D(y)` and `∇_y D = 2·J_gᵀ(y)·(g(y) − x)`.
pub fn distortion_and_gradient(g: &DenseNetwork, x: &[f64], y: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_len(g.output_dim(), x.len())?;
    check_len(g.input_dim(), y.len())?;
    let input = Array2::from_shape_vec((1, y.len()), y.to_vec()).expect("row shape");
    let cache = g.forward_batch(&input)?;
    let out = cache.output().row(0).to_vec();
    let d = squared_error(x, &out);
    let err: Vec<f64> = out.iter().zip(x).map(|(o, xi)| 2.0 * (o - xi)).collect();
    let grad_out = Array2::from_shape_vec((1, err.len()), err).expect("row shape");
    let (_, grad_in) = g.backward_batch(&cache, &grad_out);
    Ok((d, grad_in.row(0).to_vec()))
}

/// Ascent direction of `‖x − g(y)‖²` at `y`.
pub fn distortion_gradient(g: &DenseNetwork, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    Ok(distortion_and_gradient(g, x, y)?.1)
}

pub fn distortion(g: &DenseNetwork, x: &[f64], y: &[f64]) -> Result<f64> {
    check_len(g.output_dim(), x.len())?;
    Ok(squared_error(x, &g.forward(y)?))
}

/// Full PGA path: iterates `y^(1) = r, ..., y^(T)` and the effective
/// multipliers `α^(t) = 2α / (‖∇^(t)‖ + ε)` so that `s^(t) = α^(t)·J_gᵀ·e_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct PgaTrajectory {
    pub result: AttackResult,
    pub ys: Vec<Vec<f64>>,
    pub alphas: Vec<f64>,
}

impl PgaTrajectory {
    pub fn final_point(&self) -> &[f64] {
        self.ys.last().expect("trajectory starts at r")
    }
}

/// Runs PGA toward `d_star` and keeps every iterate.
pub fn pga_trajectory(
    g: &DenseNetwork,
    x: &[f64],
    r: &[f64],
    d_star: f64,
    cfg: &PgaConfig,
    trace: bool,
) -> Result<PgaTrajectory> {
    cfg.validate()?;
    let (clean, mut grad) = distortion_and_gradient(g, x, r)?;
    let mut ys = vec![r.to_vec()];
    let mut alphas = Vec::new();
    if clean >= d_star {
        return Ok(PgaTrajectory {
            result: AttackResult::already_met(clean),
            ys,
            alphas,
        });
    }
    let mut result = AttackResult {
        rho_star: 0.0,
        steps: 0,
        success: false,
        clean_distortion: clean,
        final_distortion: clean,
        distortion_trace: vec![clean],
        trace: Vec::new(),
    };
    let mut y = r.to_vec();
    for step in 1..=cfg.max_iters {
        let scale = cfg.alpha / (norm(&grad) + cfg.eps_norm);
        alphas.push(2.0 * scale);
        let mut added = 0.0;
        for (yi, gi) in y.iter_mut().zip(&grad) {
            *yi += scale * gi;
            added += (scale * gi).powi(2);
        }
        let (d, next) = distortion_and_gradient(g, x, &y)?;
        grad = next;
        ys.push(y.clone());
        result.steps = step;
        result.final_distortion = d;
        result.distortion_trace.push(d);
        result.rho_star = squared_error(&y, r);
        if trace {
            result.trace.push(TraceEntry {
                step,
                added_power: added,
                cumulative_power: result.rho_star,
                distortion: d,
                confidence: None,
                decoded: None,
            });
        }
        if d >= d_star {
            result.success = true;
            break;
        }
    }
    Ok(PgaTrajectory { result, ys, alphas })
}

/// PGA stopping at the first iterate with `D ≥ d_star`; ρ* = `‖y^(T) − r‖²`.
pub fn pga_run(
    g: &DenseNetwork,
    x: &[f64],
    r: &[f64],
    d_star: f64,
    cfg: &PgaConfig,
    trace: bool,
) -> Result<AttackResult> {
    Ok(pga_trajectory(g, x, r, d_star, cfg, trace)?.result)
}

/// Small-step closed form of the `t`-th PGA increment (1-based):
///
/// `s^(t) = α^(t)·J_tᵀ·(I + α^(t−1)J_{t−1}J_{t−1}ᵀ)···(I + α^(1)J_1J_1ᵀ)·(g(y^(1)) − x)`
///
/// with `J_i = J_g(y^(i))`, `ys[i−1] = y^(i)` and `alphas[i−1] = α^(i)`.
/// Exact for affine decoders.
pub fn closed_form_perturbation(
    g: &DenseNetwork,
    x: &[f64],
    ys: &[Vec<f64>],
    alphas: &[f64],
    t: usize,
) -> Result<Vec<f64>> {
    if t == 0 || ys.len() < t || alphas.len() < t {
        return Err(Error::Param(format!("need {t} iterates and multipliers")));
    }
    let mut e: Vec<f64> = g.forward(&ys[0])?.iter().zip(x).map(|(o, xi)| o - xi).collect();
    for i in 1..t {
        let j = g.jacobian(&ys[i - 1])?;
        let jjt_e = j.mul_vec(&j.tr_mul_vec(&e));
        e.iter_mut().zip(jjt_e).for_each(|(ei, v)| *ei += alphas[i - 1] * v);
    }
    let j: RealMatrix = g.jacobian(&ys[t - 1])?;
    Ok(j.tr_mul_vec(&e).into_iter().map(|v| alphas[t - 1] * v).collect())
}

/// C&W-style attack: minimizes `‖s‖² + c·max(D* − D(r+s), −κ)` with Adam,
/// adapting `c` geometrically across rounds.
///
/// Each round restarts from `s = 0` and ends at the first iterate that
/// reaches `D*` or after `max_iters` updates. Success halves `c` and
/// failure doubles it, clamped to `[c_min, c_max]`. The reported ρ* is the
/// smallest successful perturbation power over all rounds.
pub fn cw_run(
    g: &DenseNetwork,
    x: &[f64],
    r: &[f64],
    d_star: f64,
    cfg: &CwConfig,
    trace: bool,
) -> Result<AttackResult> {
    cfg.validate()?;
    let clean = distortion(g, x, r)?;
    if clean >= d_star {
        return Ok(AttackResult::already_met(clean));
    }
    let n = r.len();
    let mut c = cfg.c_init;
    let mut best: Option<(f64, f64)> = None;
    let mut steps = 0;
    let mut dist_trace = vec![clean];
    let mut entries = Vec::new();
    let mut last_d = clean;
    for _round in 0..cfg.rounds {
        let mut s = vec![0.0; n];
        let mut opt = VectorAdam::new(n, cfg.lr);
        let mut y = r.to_vec();
        let mut hit = None;
        for _ in 0..cfg.max_iters {
            let (d, grad_d) = distortion_and_gradient(g, x, &y)?;
            if d >= d_star {
                hit = Some(d);
                break;
            }
            // hinge active while D* − D > −κ
            let active = d_star - d > -cfg.kappa;
            let grad: Vec<f64> = s
                .iter()
                .zip(&grad_d)
                .map(|(si, gd)| 2.0 * si - if active { c * gd } else { 0.0 })
                .collect();
            opt.step(&mut s, &grad);
            y.iter_mut().zip(r.iter().zip(&s)).for_each(|(yi, (ri, si))| *yi = ri + si);
            steps += 1;
            let d_new = distortion(g, x, &y)?;
            last_d = d_new;
            dist_trace.push(d_new);
            if trace {
                entries.push(TraceEntry {
                    step: steps,
                    added_power: 0.0,
                    cumulative_power: norm(&s).powi(2),
                    distortion: d_new,
                    confidence: None,
                    decoded: None,
                });
            }
        }
        if !s.iter().all(|v| v.is_finite()) {
            return Err(Error::Diverged {
                step: steps,
                detail: "C&W perturbation became non-finite".into(),
            });
        }
        match hit {
            Some(d) => {
                let rho = norm(&s).powi(2);
                if best.is_none_or(|(b, _)| rho < b) {
                    best = Some((rho, d));
                }
                c = (c / 2.0).max(cfg.c_min);
            }
            None => c = (c * 2.0).min(cfg.c_max),
        }
    }
    Ok(match best {
        Some((rho, d)) => AttackResult {
            rho_star: rho,
            steps,
            success: true,
            clean_distortion: clean,
            final_distortion: d,
            distortion_trace: dist_trace,
            trace: entries,
        },
        None => AttackResult {
            rho_star: 0.0,
            steps,
            success: false,
            clean_distortion: clean,
            final_distortion: last_d,
            distortion_trace: dist_trace,
            trace: entries,
        },
    })
}
