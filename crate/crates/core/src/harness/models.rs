//! Per-experiment artifacts: source statistics, the classical chain with its
//! vulnerable set, and per-SNR trained models with an on-disk cache.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::{cache_key, ExperimentConfig};
use crate::bounds::{entropy_power_estimate, entropy_power_gaussian};
use crate::classical::{ClassicalChain, CodeConfig};
use crate::deepjscc::{default_networks, estimate_lipschitz, train, LipschitzEstimate, SemanticChain, TrainingConfig};
use crate::error::{Error, Result};
use crate::gms::{train_gms, GmsEnv, QAgent};
use crate::math::RngStream;
use crate::modem::{db_to_linear, transmit, transmit_real, ChannelParams};
use crate::nn::{read_network, write_network};
use crate::source::{generate, SourceKind};
use crate::vuln::{analyze, VulnerabilityProfile};

/// Bumped whenever training code changes what a cached artifact contains.
const ARTIFACT_VERSION: u32 = 1;

// stream tags under the master `(seed, 0)` stream
pub(crate) const TAG_CODE: u64 = 1;
pub(crate) const TAG_SOURCE: u64 = 2;
pub(crate) const TAG_NOISE: u64 = 3;
pub(crate) const TAG_ATTACK: u64 = 4;
pub(crate) const TAG_SEM_MODEL: u64 = 5;
pub(crate) const TAG_GMS_MODEL: u64 = 6;
pub(crate) const TAG_TRAIN_DATA: u64 = 7;
pub(crate) const TAG_LIPSCHITZ: u64 = 8;

/// Classical modulated symbols carry `|h|² = 2`, i.e. unit power per real
/// dimension, matching the semantic encoder's power constraint.
pub const CLASSICAL_H_MAG: f64 = std::f64::consts::SQRT_2;

pub fn master_stream(seed: u64) -> RngStream {
    RngStream::new(seed, 0)
}

/// Stream keyed on an SNR value rather than its list position, so adding
/// points to a sweep leaves existing ones unchanged.
pub(crate) fn snr_fork(rng: &RngStream, snr_db: f64) -> RngStream {
    rng.fork(snr_db.to_bits())
}

/// Source frame `i` of the experiment; identical across SNRs and systems.
pub fn source_frame(cfg: &ExperimentConfig, master: &RngStream, i: usize) -> Result<Vec<f64>> {
    let mut rng = master.fork(TAG_SOURCE).fork(i as u64);
    Ok(generate(&cfg.source, 1, &mut rng)?.remove(0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SourceStats {
    /// per-dimension entropy power
    pub theta_x: f64,
    /// false when `theta_x` is a nearest-neighbour estimate
    pub theta_exact: bool,
    /// `E‖x‖²`, charged when the channel decoder fails
    pub erasure_distortion: f64,
}

pub fn source_stats(cfg: &ExperimentConfig, master: &RngStream) -> Result<SourceStats> {
    let exact = cfg.source.kind == SourceKind::Gaussian && !cfg.source.clip;
    let samples = || generate(&cfg.source, cfg.semantic.train_samples.max(1000), &mut master.fork(TAG_TRAIN_DATA));
    let theta_x = if exact {
        entropy_power_gaussian(cfg.source.variance)?
    } else {
        entropy_power_estimate(&samples()?)?
    };
    if !(theta_x > 0.0 && theta_x.is_finite()) {
        return Err(Error::Config(format!("source entropy power estimate is {theta_x}")));
    }
    let erasure_distortion = match cfg.source.mean_energy() {
        Some(e) => e,
        None => {
            let xs = samples()?;
            xs.iter().map(|x| x.iter().map(|v| v * v).sum::<f64>()).sum::<f64>() / xs.len() as f64
        }
    };
    Ok(SourceStats {
        theta_x,
        theta_exact: exact,
        erasure_distortion,
    })
}

/// The classical chain and its offline vulnerable set.
#[derive(Debug, Clone)]
pub struct ClassicalSetup {
    pub chain: ClassicalChain,
    pub profile: VulnerabilityProfile,
    /// per-symbol membership in the vulnerable set
    pub targets: Vec<bool>,
}

pub fn build_classical(
    cfg: &ExperimentConfig,
    code: &CodeConfig,
    stats: &SourceStats,
    master: &RngStream,
) -> Result<ClassicalSetup> {
    let chain = ClassicalChain::new(
        code,
        cfg.quantizer,
        cfg.source.m,
        stats.erasure_distortion,
        &mut master.fork(TAG_CODE),
    )
    .map_err(|e| Error::Config(format!("code: {e}")))?;
    let profile = analyze(&chain.h, cfg.vuln.weights, cfg.vuln.eps)?;
    let targets = chain.symbol_mask(&profile.membership());
    Ok(ClassicalSetup {
        chain,
        profile,
        targets,
    })
}

/// A DeepJSCC chain trained for one SNR, with its decoder Lipschitz estimate.
#[derive(Debug, Clone)]
pub struct SemanticSetup {
    pub chain: SemanticChain,
    pub lipschitz: LipschitzEstimate,
    /// per-epoch training MSE; empty when loaded from the cache
    pub curve: Vec<f64>,
    pub sigma2: f64,
}

/// Real channel dimensions of the semantic chain.
pub fn semantic_dims(cfg: &ExperimentConfig, classical_n_real: usize) -> usize {
    cfg.semantic.channel_dims.unwrap_or(classical_n_real)
}

fn cache_path(cfg: &ExperimentConfig, key: &str, ext: &str) -> Option<PathBuf> {
    (!cfg.cache_dir.is_empty()).then(|| Path::new(&cfg.cache_dir).join(format!("{key}.{ext}")))
}

pub fn build_semantic(cfg: &ExperimentConfig, n: usize, snr_db: f64, master: &RngStream) -> Result<SemanticSetup> {
    let sigma2 = 1.0 / db_to_linear(snr_db);
    let training = TrainingConfig {
        sigma2,
        ..cfg.semantic.training
    };
    let key = cache_key(&(
        "deepjscc",
        ARTIFACT_VERSION,
        cfg.seed,
        snr_db.to_bits(),
        n,
        &cfg.source,
        cfg.semantic.hidden,
        cfg.semantic.train_samples,
        &training,
    ));
    let path = cache_path(cfg, &key, "sem");
    let cached = match &path {
        Some(p) if p.exists() => Some(load_semantic(p)?),
        _ => None,
    };
    let (chain, curve) = match cached {
        Some(chain) => {
            log::info!("loaded semantic model for {snr_db} dB from {}", path.as_ref().unwrap().display());
            (chain, Vec::new())
        }
        None => {
            let mut rng = snr_fork(&master.fork(TAG_SEM_MODEL), snr_db);
            let data = generate(&cfg.source, cfg.semantic.train_samples, &mut master.fork(TAG_TRAIN_DATA))?;
            let (f, g) = default_networks(cfg.source.m, n, cfg.semantic.hidden, &mut rng)?;
            let (chain, curve) = train(f, g, &data, &training, &mut rng)?;
            log::info!("trained semantic model for {snr_db} dB, final MSE {:.3e}", curve.last().unwrap_or(&f64::NAN));
            if let Some(p) = &path {
                save_semantic(&chain, p)?;
                write_curve(&p.with_extension("curve.csv"), "epoch,mse", &curve)?;
            }
            (chain, curve)
        }
    };
    let mut rng = snr_fork(&master.fork(TAG_LIPSCHITZ), snr_db);
    let xs = generate(&cfg.source, cfg.semantic.lipschitz_samples, &mut rng)?;
    let rs = xs
        .iter()
        .map(|x| Ok(transmit_real(&chain.encode(x)?, 1.0, sigma2, &mut rng)))
        .collect::<Result<Vec<_>>>()?;
    let lipschitz = estimate_lipschitz(&chain.decoder, &rs)?;
    Ok(SemanticSetup {
        chain,
        lipschitz,
        curve,
        sigma2,
    })
}

/// Encoder, decoder, then the inference power scale as raw `f64` bits.
pub fn save_semantic(chain: &SemanticChain, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("tmp");
    {
        let mut out = BufWriter::new(File::create(&tmp)?);
        write_network(&chain.encoder, &mut out)?;
        write_network(&chain.decoder, &mut out)?;
        out.write_all(&chain.power_scale.to_bits().to_le_bytes())?;
        out.flush()?;
    }
    fs::rename(tmp, path)?;
    Ok(())
}

pub fn load_semantic(path: &Path) -> Result<SemanticChain> {
    let mut input = BufReader::new(File::open(path)?);
    let encoder = read_network(&mut input)?;
    let decoder = read_network(&mut input)?;
    let mut buf = [0u8; 8];
    input.read_exact(&mut buf)?;
    Ok(SemanticChain {
        encoder,
        decoder,
        power_scale: f64::from_bits(u64::from_le_bytes(buf)),
    })
}

/// Trains (or loads) the GMS agent for one SNR and target.
pub fn build_gms_agent(
    cfg: &ExperimentConfig,
    classical: &ClassicalSetup,
    snr_db: f64,
    d_star: f64,
    master: &RngStream,
) -> Result<QAgent> {
    let key = cache_key(&(
        "gms",
        ARTIFACT_VERSION,
        cfg.seed,
        snr_db.to_bits(),
        d_star.to_bits(),
        &cfg.source,
        &cfg.quantizer,
        &cfg.code,
        classical.chain.erasure_distortion.to_bits(),
        &cfg.gms,
    ));
    let path = cache_path(cfg, &key, "dqn");
    if let Some(p) = path.as_ref().filter(|p| p.exists()) {
        log::info!("loaded GMS agent for {snr_db} dB from {}", p.display());
        let net = read_network(&mut BufReader::new(File::open(p)?))?;
        return Ok(QAgent::from_network(net));
    }
    let chain = &classical.chain;
    let ch = ChannelParams::from_snr_db(snr_db, CLASSICAL_H_MAG)?;
    let make_env = |rng: &mut RngStream| {
        let x = generate(&cfg.source, 1, rng)?.remove(0);
        let r = transmit(&chain.encode(&x)?, &ch, rng);
        GmsEnv::new(chain, ch, x, r, cfg.gms.alpha_mix, d_star)
    };
    let mut rng = snr_fork(&master.fork(TAG_GMS_MODEL), snr_db);
    let (agent, log) = train_gms(make_env, chain.n_sym(), &cfg.gms, &mut rng)?;
    log::info!(
        "trained GMS agent for {snr_db} dB over {} episodes, {} updates",
        log.episode_returns.len(),
        log.updates
    );
    if let Some(p) = &path {
        if let Some(dir) = p.parent() {
            fs::create_dir_all(dir)?;
        }
        let tmp = p.with_extension("tmp");
        {
            let mut out = BufWriter::new(File::create(&tmp)?);
            write_network(&agent.q, &mut out)?;
            out.flush()?;
        }
        fs::rename(tmp, p)?;
        write_curve(&p.with_extension("returns.csv"), "episode,return", &log.episode_returns)?;
    }
    Ok(agent)
}

/// Two-column CSV of an indexed curve.
pub fn write_curve(path: &Path, header: &str, values: &[f64]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{header}")?;
    for (i, v) in values.iter().enumerate() {
        writeln!(out, "{i},{v}")?;
    }
    out.flush()?;
    Ok(())
}
