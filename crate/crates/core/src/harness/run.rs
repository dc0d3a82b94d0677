//! Sweeps, ablations and bound checks over frames and SNR points.
//!
//! Every frame draws its source sample, channel noise and attack randomness
//! from streams forked off `(seed, 0)` by fixed tags, the SNR value and the
//! frame index. Frames run in parallel and are collected in index order, so
//! output does not depend on scheduling.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use super::config::{AttackKind, ExperimentConfig};
use super::models::{
    build_classical, build_gms_agent, build_semantic, master_stream, semantic_dims, snr_fork, source_frame,
    source_stats, ClassicalSetup, SemanticSetup, SourceStats, CLASSICAL_H_MAG, TAG_ATTACK, TAG_NOISE,
};
use crate::attack::{AttackResult, TraceEntry};
use crate::bounds::{robustness_condition, sem_attack_lower_bound, sscc_attack_upper_bound, Regime, SystemParams};
use crate::classical::CodeConfig;
use crate::error::{Error, Result};
use crate::gms::{run_gms_episode, GmsEnv, Policy, QAgent};
use crate::math::{percentile_sorted, RngStream};
use crate::modem::{db_to_linear, transmit, transmit_real, ChannelParams};
use crate::pga::{cw_run, distortion, pga_run};
use crate::source::SourceKind;
use crate::vs_attack::{run_vs_attack, StopRule, VsAttackConfig};

/// Increment when a CSV header changes.
pub const SCHEMA_VERSION: u32 = 1;

pub const CLASSICAL: &str = "classical";
pub const SEMANTIC: &str = "semantic";

// noise sub-streams, so both systems see independent channel draws
const NOISE_CLASSICAL: u64 = 0;
const NOISE_SEMANTIC: u64 = 1;

/// One attack on one frame at one SNR.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub snr_db: f64,
    pub system: String,
    pub attack: String,
    pub frame_id: usize,
    /// power actually spent; meaningful as ρ* only when `success`
    pub rho_star: f64,
    pub success: bool,
    pub steps: usize,
    pub clean_distortion: f64,
    pub final_distortion: f64,
    pub bound_lower: Option<f64>,
    pub bound_upper: Option<f64>,
    pub seed: u64,
}

/// Median and quartiles of ρ* per (SNR, system, attack); failed frames
/// count as infinite power.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub snr_db: f64,
    pub system: String,
    pub attack: String,
    pub frames: usize,
    pub successes: usize,
    pub median_rho: f64,
    pub q1_rho: f64,
    pub q3_rho: f64,
    pub median_clean_distortion: f64,
    pub bound_lower: Option<f64>,
    pub bound_upper: Option<f64>,
    /// this row's median over the matching classical median
    pub ratio_sem_over_sscc: Option<f64>,
    pub seed: u64,
}

/// A trace entry tagged with the row it belongs to.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub snr_db: f64,
    pub system: String,
    pub attack: String,
    pub frame_id: usize,
    #[serde(flatten)]
    pub entry: TraceEntry,
}

/// Per-SNR quantities shared by every frame.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointInfo {
    pub snr_db: f64,
    pub d_star: f64,
    pub sigma_w2: f64,
    pub g_hat: Option<f64>,
    /// real channel dimensions of the semantic chain, when trained
    pub semantic_dims: Option<usize>,
    pub bound_lower: Option<f64>,
    pub bound_upper: Option<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct RunOutput {
    pub rows: Vec<ResultRow>,
    pub summary: Vec<SummaryRow>,
    pub traces: Vec<TraceRecord>,
    pub points: Vec<PointInfo>,
}

/// Systems, attacks and models prepared once per experiment.
struct Experiment {
    master: RngStream,
    stats: SourceStats,
    classical: ClassicalSetup,
    classical_attacks: Vec<AttackKind>,
    semantic_attacks: Vec<AttackKind>,
}

impl Experiment {
    fn new(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let master = master_stream(cfg.seed);
        let stats = source_stats(cfg, &master)?;
        let classical = build_classical(cfg, &cfg.code, &stats, &master)?;
        let pick = |classical: bool, enabled: bool| -> Vec<AttackKind> {
            if !enabled {
                return Vec::new();
            }
            cfg.attacks
                .iter()
                .copied()
                .filter(|a| a.targets_classical().is_none_or(|c| c == classical))
                .collect()
        };
        let classical_attacks = pick(true, cfg.system.classical());
        let semantic_attacks = pick(false, cfg.system.semantic());
        if classical_attacks.is_empty() && semantic_attacks.is_empty() {
            return Err(Error::Config(format!(
                "no listed attack applies to system {:?}",
                cfg.system
            )));
        }
        Ok(Self {
            master,
            stats,
            classical,
            classical_attacks,
            semantic_attacks,
        })
    }

    fn bound_params(&self, cfg: &ExperimentConfig, snr_db: f64, n: usize, g_hat: f64) -> SystemParams {
        let eta = db_to_linear(snr_db);
        SystemParams {
            m: cfg.source.m,
            n,
            sigma_w2: 1.0 / eta,
            eta,
            lipschitz: g_hat,
            theta_x: self.stats.theta_x,
            d_star: cfg.d_star(self.stats.theta_x),
        }
    }
}

/// Models and bounds for one SNR point.
struct Point {
    info: PointInfo,
    ch: ChannelParams,
    semantic: Option<SemanticSetup>,
    agent: Option<QAgent>,
}

fn prepare_point(cfg: &ExperimentConfig, exp: &Experiment, snr_db: f64) -> Result<Point> {
    let d_star = cfg.d_star(exp.stats.theta_x);
    let n_classical = exp.classical.chain.n_real();
    let semantic = if exp.semantic_attacks.is_empty() {
        None
    } else {
        Some(build_semantic(cfg, semantic_dims(cfg, n_classical), snr_db, &exp.master)?)
    };
    let agent = if exp.classical_attacks.contains(&AttackKind::Gms) {
        Some(build_gms_agent(cfg, &exp.classical, snr_db, d_star, &exp.master)?)
    } else {
        None
    };
    let g_hat = semantic.as_ref().map(|s| s.lipschitz.g_hat);
    let bound_lower = semantic.as_ref().map(|s| {
        let p = exp.bound_params(cfg, snr_db, s.chain.n(), s.lipschitz.g_hat);
        sem_attack_lower_bound(&p)
    });
    let bound_upper = if exp.classical_attacks.is_empty() {
        None
    } else {
        sscc_attack_upper_bound(&exp.bound_params(cfg, snr_db, n_classical, 1.0))
    };
    Ok(Point {
        info: PointInfo {
            snr_db,
            d_star,
            sigma_w2: 1.0 / db_to_linear(snr_db),
            g_hat,
            semantic_dims: semantic.as_ref().map(|s| s.chain.n()),
            bound_lower,
            bound_upper,
        },
        ch: ChannelParams::from_snr_db(snr_db, CLASSICAL_H_MAG)?,
        semantic,
        agent,
    })
}

type FrameOutput = Vec<(ResultRow, Vec<TraceEntry>)>;

fn row(cfg: &ExperimentConfig, info: &PointInfo, system: &str, attack: String, frame_id: usize, res: &AttackResult) -> ResultRow {
    ResultRow {
        snr_db: info.snr_db,
        system: system.into(),
        attack,
        frame_id,
        rho_star: res.rho_star,
        success: res.success,
        steps: res.steps,
        clean_distortion: res.clean_distortion,
        final_distortion: res.final_distortion,
        bound_lower: info.bound_lower,
        bound_upper: info.bound_upper,
        seed: cfg.seed,
    }
}

/// The no-attack baseline: zero power, success iff the target is already met.
fn no_attack(clean: f64, d_star: f64) -> AttackResult {
    AttackResult {
        success: clean >= d_star,
        ..AttackResult::already_met(clean)
    }
}

fn frame_streams(exp: &Experiment, snr_db: f64, i: usize) -> (RngStream, RngStream) {
    let noise = snr_fork(&exp.master.fork(TAG_NOISE), snr_db).fork(i as u64);
    let attack = snr_fork(&exp.master.fork(TAG_ATTACK), snr_db).fork(i as u64);
    (noise, attack)
}

fn classical_received(setup: &ClassicalSetup, x: &[f64], ch: &ChannelParams, noise: &RngStream) -> Result<Vec<Complex64>> {
    Ok(transmit(&setup.chain.encode(x)?, ch, &mut noise.fork(NOISE_CLASSICAL)))
}

fn run_frame(cfg: &ExperimentConfig, exp: &Experiment, point: &Point, i: usize, trace: bool) -> Result<FrameOutput> {
    let info = &point.info;
    let d_star = info.d_star;
    let x = source_frame(cfg, &exp.master, i)?;
    let (noise, attack_rng) = frame_streams(exp, info.snr_db, i);
    let mut out = Vec::new();

    if !exp.classical_attacks.is_empty() {
        let chain = &exp.classical.chain;
        let r = classical_received(&exp.classical, &x, &point.ch, &noise)?;
        for &a in &exp.classical_attacks {
            let mut res = match a {
                AttackKind::Vs => run_vs_attack(
                    chain,
                    &x,
                    &r,
                    &point.ch,
                    &exp.classical.targets,
                    &cfg.vs,
                    StopRule::Distortion(d_star),
                    trace,
                )?,
                AttackKind::Gms => {
                    let agent = point.agent.as_ref().expect("agent trained when gms is listed");
                    let mut env = GmsEnv::new(chain, point.ch, x.clone(), r.clone(), cfg.gms.alpha_mix, d_star)?;
                    let policy = Policy::EpsilonGreedy(agent, cfg.gms.eval_epsilon);
                    run_gms_episode(&mut env, policy, cfg.gms.step_cap, &mut attack_rng.fork(0), trace)?
                }
                AttackKind::None => no_attack(chain.evaluate(&x, &r, &point.ch).0, d_star),
                AttackKind::Pga | AttackKind::Cw => unreachable!("semantic attack on classical chain"),
            };
            let trace = std::mem::take(&mut res.trace);
            out.push((row(cfg, info, CLASSICAL, a.to_string(), i, &res), trace));
        }
    }

    if let Some(sem) = &point.semantic {
        let r = transmit_real(&sem.chain.encode(&x)?, 1.0, sem.sigma2, &mut noise.fork(NOISE_SEMANTIC));
        let g = &sem.chain.decoder;
        for &a in &exp.semantic_attacks {
            let mut res = match a {
                AttackKind::Pga => pga_run(g, &x, &r, d_star, &cfg.pga, trace)?,
                AttackKind::Cw => cw_run(g, &x, &r, d_star, &cfg.cw, trace)?,
                AttackKind::None => no_attack(distortion(g, &x, &r)?, d_star),
                AttackKind::Vs | AttackKind::Gms => unreachable!("classical attack on semantic chain"),
            };
            let trace = std::mem::take(&mut res.trace);
            out.push((row(cfg, info, SEMANTIC, a.to_string(), i, &res), trace));
        }
    }
    Ok(out)
}

fn collect(frames: Vec<FrameOutput>, trace: bool, out: &mut RunOutput) {
    for (r, entries) in frames.into_iter().flatten() {
        if trace {
            out.traces.extend(entries.into_iter().map(|entry| TraceRecord {
                snr_db: r.snr_db,
                system: r.system.clone(),
                attack: r.attack.clone(),
                frame_id: r.frame_id,
                entry,
            }));
        }
        out.rows.push(r);
    }
}

/// One row per (SNR, frame, system, attack), plus per-point summaries.
pub fn run_sweep(cfg: &ExperimentConfig, trace: bool) -> Result<RunOutput> {
    let exp = Experiment::new(cfg)?;
    let mut out = RunOutput::default();
    for &snr_db in &cfg.snr_db {
        let point = prepare_point(cfg, &exp, snr_db)?;
        let frames = (0..cfg.frames)
            .into_par_iter()
            .map(|i| run_frame(cfg, &exp, &point, i, trace))
            .collect::<Result<Vec<_>>>()?;
        collect(frames, trace, &mut out);
        out.points.push(point.info);
    }
    out.summary = summarize(&out.rows, cfg.seed, true);
    Ok(out)
}

/// Label for a classical ablation setting, e.g. `classical-qpsk-1/2`.
pub fn setting_label(code: &CodeConfig) -> String {
    format!("{CLASSICAL}-{}-{}", code.modulation, code.rate)
}

/// Attack label of a VS arm, e.g. `vs_e9`.
pub fn vs_arm_label(e: f64) -> String {
    format!("vs_e{e}")
}

/// VS with the configured extra weight against `e = 0`, on identical
/// frames and noise, for every configured modulation/rate setting.
pub fn run_ablation(cfg: &ExperimentConfig, trace: bool) -> Result<RunOutput> {
    cfg.validate()?;
    let master = master_stream(cfg.seed);
    let stats = source_stats(cfg, &master)?;
    let arms = [
        cfg.vs,
        VsAttackConfig {
            extra_weight_e: 0.0,
            ..cfg.vs
        },
    ];
    let exp_stub = |classical| Experiment {
        master: master.clone(),
        stats,
        classical,
        classical_attacks: vec![AttackKind::Vs],
        semantic_attacks: Vec::new(),
    };
    let mut out = RunOutput::default();
    for setting in &cfg.ablation.settings {
        let code = CodeConfig {
            modulation: setting.modulation,
            rate: setting.rate,
            n: cfg.ablation.n,
            ..cfg.code.clone()
        };
        let exp = exp_stub(build_classical(cfg, &code, &stats, &master)?);
        let label = setting_label(&code);
        for &snr_db in &cfg.snr_db {
            let d_star = cfg.d_star(stats.theta_x);
            let bound_upper =
                sscc_attack_upper_bound(&exp.bound_params(cfg, snr_db, exp.classical.chain.n_real(), 1.0));
            let info = PointInfo {
                snr_db,
                d_star,
                sigma_w2: 1.0 / db_to_linear(snr_db),
                g_hat: None,
                semantic_dims: None,
                bound_lower: None,
                bound_upper,
            };
            let ch = ChannelParams::from_snr_db(snr_db, CLASSICAL_H_MAG)?;
            let frames = (0..cfg.frames)
                .into_par_iter()
                .map(|i| {
                    let x = source_frame(cfg, &master, i)?;
                    let (noise, _) = frame_streams(&exp, snr_db, i);
                    let r = classical_received(&exp.classical, &x, &ch, &noise)?;
                    arms.iter()
                        .map(|arm| {
                            let res = run_vs_attack(
                                &exp.classical.chain,
                                &x,
                                &r,
                                &ch,
                                &exp.classical.targets,
                                arm,
                                StopRule::Distortion(d_star),
                                trace,
                            )?;
                            Ok((row(cfg, &info, &label, vs_arm_label(arm.extra_weight_e), i, &res), res.trace))
                        })
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            collect(frames, trace, &mut out);
            out.points.push(info);
        }
    }
    out.summary = summarize(&out.rows, cfg.seed, false);
    Ok(out)
}

/// Measured ρ* beside both bounds and the robustness-condition report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundRow {
    pub snr_db: f64,
    pub system: String,
    pub attack: String,
    pub frame_id: usize,
    pub rho_star: f64,
    pub success: bool,
    pub d_star: f64,
    pub g_hat: Option<f64>,
    pub bound_lower: Option<f64>,
    pub bound_upper: Option<f64>,
    pub regime: Option<String>,
    pub condition_lhs: Option<f64>,
    pub condition_rhs: Option<f64>,
    pub condition_holds: Option<bool>,
    /// the measurement contradicts the bound that applies to this row
    pub violation: bool,
    /// the attack left the distortion below its clean value
    pub distortion_decreased: bool,
    pub seed: u64,
}

#[derive(Debug, Clone, Default)]
pub struct BoundCheckOutput {
    pub rows: Vec<BoundRow>,
    pub lower_violations: usize,
    pub upper_violations: usize,
    pub distortion_decreases: usize,
    pub points: Vec<PointInfo>,
    /// summary of the underlying sweep
    pub summary: Vec<SummaryRow>,
}

/// Relative slack for comparing a measured power against a bound.
const BOUND_TOL: f64 = 1e-9;

/// Whether `row` contradicts the bound that applies to it: the lower bound
/// holds for any successful semantic attack, the upper bound for the VS
/// attack whenever it is positive (a VS failure then counts as a violation).
pub fn bound_violated(row: &ResultRow) -> bool {
    match (row.system.as_str(), row.attack.as_str()) {
        (SEMANTIC, "pga" | "cw") => row
            .bound_lower
            .is_some_and(|b| row.success && row.rho_star < b * (1.0 - BOUND_TOL) - BOUND_TOL),
        (CLASSICAL, "vs") => row
            .bound_upper
            .is_some_and(|b| b > 0.0 && (!row.success || row.rho_star > b * (1.0 + BOUND_TOL) + BOUND_TOL)),
        _ => false,
    }
}

/// Runs the sweep on a Gaussian source and tests every row against the
/// bounds computed with the analytic entropy power.
pub fn run_bound_check(cfg: &ExperimentConfig) -> Result<BoundCheckOutput> {
    if cfg.source.kind != SourceKind::Gaussian || cfg.source.clip {
        return Err(Error::Config(
            "bound checks need an unclipped Gaussian source with analytic entropy power".into(),
        ));
    }
    let sweep = run_sweep(cfg, false)?;
    let theta_x = cfg.source.variance;
    let mut out = BoundCheckOutput {
        points: sweep.points.clone(),
        summary: sweep.summary.clone(),
        ..Default::default()
    };
    for r in sweep.rows {
        let info = sweep
            .points
            .iter()
            .find(|p| p.snr_db == r.snr_db)
            .expect("every row has a point");
        let report = info
            .g_hat
            .zip(info.semantic_dims)
            .map(|(g, n)| {
                let eta = db_to_linear(r.snr_db);
                robustness_condition(&SystemParams {
                    m: cfg.source.m,
                    n,
                    sigma_w2: 1.0 / eta,
                    eta,
                    lipschitz: g,
                    theta_x,
                    d_star: info.d_star,
                })
            })
            .transpose()?;
        let violation = bound_violated(&r);
        let decreased = r.final_distortion < r.clean_distortion;
        if violation {
            if r.system == SEMANTIC {
                out.lower_violations += 1;
            } else {
                out.upper_violations += 1;
            }
        }
        out.distortion_decreases += decreased as usize;
        out.rows.push(BoundRow {
            snr_db: r.snr_db,
            system: r.system,
            attack: r.attack,
            frame_id: r.frame_id,
            rho_star: r.rho_star,
            success: r.success,
            d_star: info.d_star,
            g_hat: info.g_hat,
            bound_lower: r.bound_lower,
            bound_upper: r.bound_upper,
            regime: report.map(|p| regime_name(p.regime).into()),
            condition_lhs: report.map(|p| p.lhs),
            condition_rhs: report.map(|p| p.rhs),
            condition_holds: report.map(|p| p.condition_holds),
            violation,
            distortion_decreased: decreased,
            seed: r.seed,
        });
    }
    Ok(out)
}

pub fn regime_name(r: Regime) -> &'static str {
    match r {
        Regime::I => "I",
        Regime::II => "II",
        Regime::III => "III",
    }
}

/// ρ* with failed attacks mapped to `+∞`; the no-attack baseline keeps
/// its zero.
pub fn effective_rho(row: &ResultRow) -> f64 {
    if row.success || row.attack == "none" {
        row.rho_star
    } else {
        f64::INFINITY
    }
}

/// Groups rows by (SNR, system, attack) in first-appearance order. With
/// `ratios`, each semantic group's median is divided by the median of the
/// first classical attack group at the same SNR.
pub fn summarize(rows: &[ResultRow], seed: u64, ratios: bool) -> Vec<SummaryRow> {
    let mut keys: Vec<(u64, &str, &str)> = Vec::new();
    for r in rows {
        let k = (r.snr_db.to_bits(), r.system.as_str(), r.attack.as_str());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    let mut out: Vec<SummaryRow> = keys
        .iter()
        .map(|&(snr_bits, system, attack)| {
            let group: Vec<&ResultRow> = rows
                .iter()
                .filter(|r| r.snr_db.to_bits() == snr_bits && r.system == system && r.attack == attack)
                .collect();
            let mut rho: Vec<f64> = group.iter().map(|r| effective_rho(r)).collect();
            rho.sort_by(f64::total_cmp);
            let mut clean: Vec<f64> = group.iter().map(|r| r.clean_distortion).collect();
            clean.sort_by(f64::total_cmp);
            SummaryRow {
                snr_db: f64::from_bits(snr_bits),
                system: system.into(),
                attack: attack.into(),
                frames: group.len(),
                successes: group.iter().filter(|r| r.success).count(),
                median_rho: percentile_sorted(&rho, 50.0),
                q1_rho: percentile_sorted(&rho, 25.0),
                q3_rho: percentile_sorted(&rho, 75.0),
                median_clean_distortion: percentile_sorted(&clean, 50.0),
                bound_lower: group[0].bound_lower,
                bound_upper: group[0].bound_upper,
                ratio_sem_over_sscc: None,
                seed,
            }
        })
        .collect();
    if ratios {
        let reference: Vec<(u64, f64)> = out
            .iter()
            .filter(|s| s.system == CLASSICAL && s.attack != "none")
            .fold(Vec::new(), |mut acc, s| {
                if !acc.iter().any(|(k, _)| *k == s.snr_db.to_bits()) {
                    acc.push((s.snr_db.to_bits(), s.median_rho));
                }
                acc
            });
        for s in out.iter_mut().filter(|s| s.system == SEMANTIC && s.attack != "none") {
            s.ratio_sem_over_sscc = reference
                .iter()
                .find(|(k, _)| *k == s.snr_db.to_bits())
                .map(|(_, m)| s.median_rho / m);
        }
    }
    out
}
