//! Gray-mapped QPSK / 16-QAM, exact soft demapping and the flat-fading
//! AWGN channel `r = |h|·z + ω`.
//!
//! Noise convention: `noise_var` is the variance of ω per complex symbol,
//! split equally between I and Q. A unit-power constellation at `h_mag = 1`
//! therefore sees an SNR of exactly `1 / noise_var`.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ldpc::LLR_CLIP;
use crate::math::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Modulation {
    #[serde(rename = "qpsk")]
    Qpsk,
    #[serde(rename = "16qam")]
    Qam16,
}

impl fmt::Display for Modulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Modulation::Qpsk => "qpsk",
            Modulation::Qam16 => "16qam",
        })
    }
}

impl FromStr for Modulation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "qpsk" => Ok(Modulation::Qpsk),
            "16qam" | "qam16" | "16-qam" => Ok(Modulation::Qam16),
            other => Err(Error::Param(format!("unknown modulation {other:?}"))),
        }
    }
}

/// Gray level map for one axis, indexed by the axis' bit pair (first bit is
/// the sign: 0 ⇒ positive). Adjacent levels differ in one bit.
const QAM16_AXIS: [(u8, f64); 4] = [(0b00, 3.0), (0b01, 1.0), (0b11, -1.0), (0b10, -3.0)];

/// Unit average-power constellation with Gray bit labels.
///
/// Label bit `b` of a point is `(label >> (B − 1 − b)) & 1`, i.e. bits are
/// read most-significant first in the order they appear in the bit stream.
#[derive(Debug, Clone)]
pub struct Constellation {
    modulation: Modulation,
    bits_per_symbol: usize,
    /// indexed by label
    points: Vec<Complex64>,
}

impl Constellation {
    pub fn new(modulation: Modulation) -> Self {
        let points = match modulation {
            Modulation::Qpsk => {
                let a = std::f64::consts::FRAC_1_SQRT_2;
                (0..4u8)
                    .map(|l| {
                        let re = if l & 0b10 == 0 { a } else { -a };
                        let im = if l & 0b01 == 0 { a } else { -a };
                        Complex64::new(re, im)
                    })
                    .collect()
            }
            Modulation::Qam16 => {
                let scale = 1.0 / 10f64.sqrt();
                let level = |pair: u8| QAM16_AXIS.iter().find(|(p, _)| *p == pair).map(|(_, v)| *v).unwrap();
                (0..16u8)
                    .map(|l| Complex64::new(level(l >> 2) * scale, level(l & 0b11) * scale))
                    .collect()
            }
        };
        let bits_per_symbol = match modulation {
            Modulation::Qpsk => 2,
            Modulation::Qam16 => 4,
        };
        Self {
            modulation,
            bits_per_symbol,
            points,
        }
    }

    pub fn modulation(&self) -> Modulation {
        self.modulation
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.bits_per_symbol
    }

    pub fn order(&self) -> usize {
        self.points.len()
    }

    /// Point carrying `label`.
    pub fn point(&self, label: usize) -> Complex64 {
        self.points[label]
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn label_bit(&self, label: usize, b: usize) -> u8 {
        ((label >> (self.bits_per_symbol - 1 - b)) & 1) as u8
    }

    pub fn modulate(&self, bits: &[u8]) -> Result<Vec<Complex64>> {
        let bps = self.bits_per_symbol;
        if !bits.len().is_multiple_of(bps) {
            return Err(Error::Param(format!(
                "{} bits do not fill whole {}-bit symbols",
                bits.len(),
                bps
            )));
        }
        Ok(bits
            .chunks(bps)
            .map(|chunk| self.points[chunk.iter().fold(0usize, |acc, &b| (acc << 1) | (b & 1) as usize)])
            .collect())
    }

    /// Minimum-distance label for `y`.
    pub fn nearest(&self, y: Complex64) -> usize {
        let mut best = (f64::INFINITY, 0);
        for (l, p) in self.points.iter().enumerate() {
            let d = (y - p).norm_sqr();
            if d < best.0 {
                best = (d, l);
            }
        }
        best.1
    }

    /// Minimum-distance hard decisions, `B` bits per symbol.
    pub fn hard_demap(&self, symbols: &[Complex64]) -> Vec<u8> {
        let mut out = Vec::with_capacity(symbols.len() * self.bits_per_symbol);
        for &y in symbols {
            let l = self.nearest(y);
            out.extend((0..self.bits_per_symbol).map(|b| self.label_bit(l, b)));
        }
        out
    }

    /// Exact log-sum-exp bit LLRs of one equalized symbol, clipped to ±[`LLR_CLIP`].
    ///
    /// `L_b = ln Σ_{p: b=0} exp(−|y−p|²/v) − ln Σ_{p: b=1} exp(−|y−p|²/v)`.
    pub fn bit_llrs(&self, y: Complex64, noise_var_eff: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.bits_per_symbol];
        self.bit_llrs_into(y, noise_var_eff, &mut out);
        out
    }

    pub fn bit_llrs_into(&self, y: Complex64, noise_var_eff: f64, out: &mut [f64]) {
        self.raw_llrs_into(y, noise_var_eff, out);
        out.iter_mut().for_each(|l| *l = l.clamp(-LLR_CLIP, LLR_CLIP));
    }

    /// Exact LLRs without the clip; smooth away from decision boundaries.
    pub fn raw_llrs_into(&self, y: Complex64, noise_var_eff: f64, out: &mut [f64]) {
        debug_assert!(noise_var_eff > 0.0);
        let mut metric = [0.0f64; 16];
        for (l, p) in self.points.iter().enumerate() {
            metric[l] = -(y - p).norm_sqr() / noise_var_eff;
        }
        let metric = &metric[..self.points.len()];
        for (b, slot) in out.iter_mut().enumerate().take(self.bits_per_symbol) {
            let (mut m0, mut m1) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
            for (l, &m) in metric.iter().enumerate() {
                if self.label_bit(l, b) == 0 {
                    m0 = m0.max(m);
                } else {
                    m1 = m1.max(m);
                }
            }
            let (mut s0, mut s1) = (0.0, 0.0);
            for (l, &m) in metric.iter().enumerate() {
                if self.label_bit(l, b) == 0 {
                    s0 += (m - m0).exp();
                } else {
                    s1 += (m - m1).exp();
                }
            }
            *slot = (m0 + s0.ln()) - (m1 + s1.ln());
        }
    }

    /// Bit LLRs for a frame of received symbols `r = h·z + ω`.
    pub fn demap(&self, received: &[Complex64], ch: &ChannelParams) -> Vec<f64> {
        let nve = ch.noise_var_eff();
        let mut out = vec![0.0; received.len() * self.bits_per_symbol];
        for (y, chunk) in received.iter().zip(out.chunks_mut(self.bits_per_symbol)) {
            self.bit_llrs_into(y / ch.h_mag, nve, chunk);
        }
        out
    }
}

/// Flat-fading AWGN channel with perfect phase compensation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub h_mag: f64,
    /// variance of ω per complex symbol (half per real dimension)
    pub noise_var: f64,
}

impl ChannelParams {
    pub fn new(h_mag: f64, noise_var: f64) -> Result<Self> {
        if !(h_mag > 0.0 && h_mag.is_finite()) {
            return Err(Error::Param(format!("h_mag must be positive, got {h_mag}")));
        }
        if !(noise_var > 0.0 && noise_var.is_finite()) {
            return Err(Error::Param(format!("noise_var must be positive, got {noise_var}")));
        }
        Ok(Self { h_mag, noise_var })
    }

    /// Noise variance giving SNR `η = h² / σ²` of `snr_db`.
    pub fn from_snr_db(snr_db: f64, h_mag: f64) -> Result<Self> {
        Self::new(h_mag, h_mag * h_mag / db_to_linear(snr_db))
    }

    pub fn snr(&self) -> f64 {
        self.h_mag * self.h_mag / self.noise_var
    }

    pub fn snr_db(&self) -> f64 {
        10.0 * self.snr().log10()
    }

    /// Noise variance seen after dividing by `h`.
    pub fn noise_var_eff(&self) -> f64 {
        self.noise_var / (self.h_mag * self.h_mag)
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Complex AWGN samples with variance `noise_var` per symbol.
pub fn complex_noise(rng: &mut RngStream, n: usize, noise_var: f64) -> Vec<Complex64> {
    let s = (0.5 * noise_var).sqrt();
    (0..n).map(|_| Complex64::new(s * rng.normal(), s * rng.normal())).collect()
}

/// `r = h_mag·z + ω`.
pub fn transmit(z: &[Complex64], ch: &ChannelParams, rng: &mut RngStream) -> Vec<Complex64> {
    let w = complex_noise(rng, z.len(), ch.noise_var);
    z.iter().zip(w).map(|(&zi, wi)| ch.h_mag * zi + wi).collect()
}

/// Real-valued channel `r = h·z + ω` with variance `sigma2` per dimension.
pub fn transmit_real(z: &[f64], h: f64, sigma2: f64, rng: &mut RngStream) -> Vec<f64> {
    let s = sigma2.sqrt();
    z.iter().map(|&zi| h * zi + s * rng.normal()).collect()
}
