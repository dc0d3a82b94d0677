//! Experiment configuration: TOML with every field defaulted.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classical::CodeConfig;
use crate::deepjscc::TrainingConfig;
use crate::error::{Error, Result};
use crate::gms::GmsConfig;
use crate::ldpc::CodeRate;
use crate::modem::Modulation;
use crate::pga::{CwConfig, PgaConfig};
use crate::source::{QuantizerSpec, SourceSpec};
use crate::vs_attack::VsAttackConfig;
use crate::vuln::FeatureWeights;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    Classical,
    Semantic,
    Both,
}

impl SystemKind {
    pub fn classical(self) -> bool {
        matches!(self, SystemKind::Classical | SystemKind::Both)
    }

    pub fn semantic(self) -> bool {
        matches!(self, SystemKind::Semantic | SystemKind::Both)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    Vs,
    Gms,
    Pga,
    Cw,
    None,
}

impl AttackKind {
    /// Whether the attack applies to the classical (true) or semantic chain.
    pub fn targets_classical(self) -> Option<bool> {
        match self {
            AttackKind::Vs | AttackKind::Gms => Some(true),
            AttackKind::Pga | AttackKind::Cw => Some(false),
            AttackKind::None => None,
        }
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AttackKind::Vs => "vs",
            AttackKind::Gms => "gms",
            AttackKind::Pga => "pga",
            AttackKind::Cw => "cw",
            AttackKind::None => "none",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TargetConfig {
    /// absolute target; overrides the fraction when set
    pub d_star: Option<f64>,
    /// `D* = fraction · MΘ_x`
    pub fraction_of_source_power: f64,
}

impl Default for TargetConfig {
    fn default() -> Self {
        Self {
            d_star: None,
            fraction_of_source_power: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VulnConfig {
    pub weights: FeatureWeights,
    pub eps: f64,
}

impl Default for VulnConfig {
    fn default() -> Self {
        Self {
            weights: FeatureWeights::default(),
            eps: crate::vuln::DEFAULT_EPS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SemanticConfig {
    /// real channel dimensions; defaults to the classical frame's
    pub channel_dims: Option<usize>,
    pub hidden: usize,
    pub train_samples: usize,
    /// channel outputs used for the Lipschitz estimate
    pub lipschitz_samples: usize,
    /// `sigma2` is replaced per SNR point
    pub training: TrainingConfig,
}

impl Default for SemanticConfig {
    fn default() -> Self {
        Self {
            channel_dims: None,
            hidden: 64,
            train_samples: 4096,
            lipschitz_samples: 200,
            training: TrainingConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodeSetting {
    pub modulation: Modulation,
    pub rate: CodeRate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationConfig {
    /// block length shared by every setting; a multiple of 18 suits the
    /// row weights of rates 1/2 (6), 2/3 (9) and 5/6 (18) at column weight 3
    pub n: usize,
    pub settings: Vec<CodeSetting>,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            n: 144,
            settings: vec![
                CodeSetting {
                    modulation: Modulation::Qpsk,
                    rate: CodeRate::Half,
                },
                CodeSetting {
                    modulation: Modulation::Qpsk,
                    rate: CodeRate::TwoThirds,
                },
                CodeSetting {
                    modulation: Modulation::Qam16,
                    rate: CodeRate::Half,
                },
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub frames: usize,
    pub snr_db: Vec<f64>,
    pub system: SystemKind,
    pub attacks: Vec<AttackKind>,
    pub output: String,
    /// trained models are stored here keyed by a config hash; empty disables
    pub cache_dir: String,
    pub source: SourceSpec,
    pub quantizer: QuantizerSpec,
    pub code: CodeConfig,
    pub vuln: VulnConfig,
    pub target: TargetConfig,
    pub semantic: SemanticConfig,
    pub vs: VsAttackConfig,
    pub gms: GmsConfig,
    pub pga: PgaConfig,
    pub cw: CwConfig,
    pub ablation: AblationConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            frames: 100,
            snr_db: vec![6.0, 9.0, 12.0],
            system: SystemKind::Both,
            attacks: vec![AttackKind::Vs, AttackKind::Pga],
            output: "results.csv".into(),
            cache_dir: ".advcomm-cache".into(),
            source: SourceSpec::default(),
            quantizer: QuantizerSpec {
                bits_per_sample: 3,
                lo: 0.0,
                hi: 1.0,
            },
            code: CodeConfig::default(),
            vuln: VulnConfig::default(),
            target: TargetConfig::default(),
            semantic: SemanticConfig::default(),
            vs: VsAttackConfig::default(),
            gms: GmsConfig::default(),
            pga: PgaConfig::default(),
            cw: CwConfig::default(),
            ablation: AblationConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Rejects inconsistent settings with a config error.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.frames == 0 {
            return bad("frames must be at least 1".into());
        }
        if self.snr_db.is_empty() || self.snr_db.iter().any(|s| !s.is_finite()) {
            return bad("snr_db must list finite values".into());
        }
        if self.attacks.is_empty() {
            return bad("attacks must not be empty".into());
        }
        if let Some(d) = self.target.d_star {
            if !(d > 0.0) {
                return bad(format!("target d_star must be positive, got {d}"));
            }
        } else if !(self.target.fraction_of_source_power > 0.0) {
            return bad("target fraction must be positive".into());
        }
        let wrap = |r: Result<()>, what: &str| r.map_err(|e| Error::Config(format!("{what}: {e}")));
        wrap(self.source.validate(), "source")?;
        wrap(self.quantizer.validate(), "quantizer")?;
        wrap(self.vs.validate(), "vs")?;
        wrap(self.gms.validate(), "gms")?;
        wrap(self.pga.validate(), "pga")?;
        wrap(self.cw.validate(), "cw")?;
        wrap(self.semantic.training.validate(), "semantic.training")?;
        if self.semantic.lipschitz_samples < 100 {
            return bad("semantic.lipschitz_samples must be at least 100".into());
        }
        if self.semantic.hidden == 0 || self.semantic.train_samples == 0 {
            return bad("semantic.hidden and semantic.train_samples must be positive".into());
        }
        if self.ablation.settings.is_empty() {
            return bad("ablation.settings must not be empty".into());
        }
        Ok(())
    }

    /// Target distortion given the source's entropy power.
    pub fn d_star(&self, theta_x: f64) -> f64 {
        self.target
            .d_star
            .unwrap_or(self.target.fraction_of_source_power * self.source.m as f64 * theta_x)
    }
}

/// Hex SHA-256 of a serializable key, used to name cached artifacts.
pub fn cache_key(parts: &impl Serialize) -> String {
    let json = serde_json::to_string(parts).expect("key serializes");
    Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}
