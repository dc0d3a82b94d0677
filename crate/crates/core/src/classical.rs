//! Separate source-channel chain: uniform quantizer → scrambler → LDPC →
//! Gray modulation → channel → exact demapper → BP → dequantizer.
//!
//! A frame is one codeword. Coded bits map to symbols in order, `B` bits
//! per symbol, so symbol `i` carries variable nodes `iB .. (i+1)B`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ldpc::{build_regular_ldpc, to_generator, BpDecoder, CodeRate, GeneratorMatrix, ParityCheckMatrix};
use crate::math::{complex_power, RngStream};
use crate::modem::{ChannelParams, Constellation, Modulation};
use crate::source::{squared_error, QuantizerSpec};

const SCRAMBLER_SEED: u64 = 0x5c7a_3b1e;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CodeConfig {
    pub n: usize,
    pub rate: CodeRate,
    pub col_weight: usize,
    pub max_iters: usize,
    pub modulation: Modulation,
}

impl Default for CodeConfig {
    fn default() -> Self {
        Self {
            n: 96,
            rate: CodeRate::Half,
            col_weight: 3,
            max_iters: crate::ldpc::DEFAULT_MAX_ITERS,
            modulation: Modulation::Qpsk,
        }
    }
}

/// Decoder output for one received frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Reception {
    pub converged: bool,
    pub iters: usize,
    pub x_hat: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ClassicalChain {
    pub h: ParityCheckMatrix,
    pub g: GeneratorMatrix,
    pub constellation: Constellation,
    pub quantizer: QuantizerSpec,
    decoder: BpDecoder,
    m: usize,
    max_iters: usize,
    scrambler: Vec<u8>,
    /// distortion charged for a decoding failure (`E‖x‖²`)
    pub erasure_distortion: f64,
}

impl ClassicalChain {
    /// Builds the code and checks that `m` quantized samples fit in one
    /// codeword and the codeword fills whole symbols.
    pub fn new(
        code: &CodeConfig,
        quantizer: QuantizerSpec,
        m: usize,
        erasure_distortion: f64,
        rng: &mut RngStream,
    ) -> Result<Self> {
        quantizer.validate()?;
        let h = build_regular_ldpc(code.n, code.rate, code.col_weight, rng)?;
        let (g, _) = to_generator(&h);
        let constellation = Constellation::new(code.modulation);
        if !code.n.is_multiple_of(constellation.bits_per_symbol()) {
            return Err(Error::Param(format!(
                "n={} does not fill whole {} symbols",
                code.n, code.modulation
            )));
        }
        if m * quantizer.bits_per_sample > g.k() {
            return Err(Error::Param(format!(
                "{m} samples × {} bits exceed k={}",
                quantizer.bits_per_sample,
                g.k()
            )));
        }
        let mut pn = RngStream::new(SCRAMBLER_SEED, 0);
        let scrambler = (0..g.k()).map(|_| pn.below(2) as u8).collect();
        Ok(Self {
            decoder: BpDecoder::new(&h),
            h,
            g,
            constellation,
            quantizer,
            m,
            max_iters: code.max_iters.max(1),
            scrambler,
            erasure_distortion,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n_sym(&self) -> usize {
        self.h.n() / self.constellation.bits_per_symbol()
    }

    /// Real channel dimensions per frame.
    pub fn n_real(&self) -> usize {
        2 * self.n_sym()
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.constellation.bits_per_symbol()
    }

    /// Codeword for source sample `x`.
    pub fn encode_bits(&self, x: &[f64]) -> Result<Vec<u8>> {
        crate::error::check_len(self.m, x.len())?;
        let (mut bits, _) = self.quantizer.quantize(x);
        bits.resize(self.g.k(), 0);
        bits.iter_mut().zip(&self.scrambler).for_each(|(b, s)| *b ^= s);
        self.g.encode(&bits)
    }

    /// Transmit symbols `z` for source sample `x`.
    pub fn encode(&self, x: &[f64]) -> Result<Vec<Complex64>> {
        self.constellation.modulate(&self.encode_bits(x)?)
    }

    pub fn receive(&self, y: &[Complex64], ch: &ChannelParams) -> Reception {
        let llr = self.constellation.demap(y, ch);
        let out = self.decoder.decode(&llr, self.max_iters);
        let mut info = self.g.extract_info(&out.bits);
        info.iter_mut().zip(&self.scrambler).for_each(|(b, s)| *b ^= s);
        info.truncate(self.m * self.quantizer.bits_per_sample);
        let x_hat = self.quantizer.dequantize(&info).expect("whole samples");
        Reception {
            converged: out.converged,
            iters: out.iters_used,
            x_hat,
        }
    }

    /// `‖x − x̂‖²`, or the erasure distortion when BP does not converge.
    pub fn distortion(&self, x: &[f64], rx: &Reception) -> f64 {
        if rx.converged {
            squared_error(x, &rx.x_hat)
        } else {
            self.erasure_distortion
        }
    }

    pub fn evaluate(&self, x: &[f64], y: &[Complex64], ch: &ChannelParams) -> (f64, Reception) {
        let rx = self.receive(y, ch);
        (self.distortion(x, &rx), rx)
    }

    /// Symbols carrying at least one marked variable node.
    pub fn symbol_mask(&self, vn_mask: &[bool]) -> Vec<bool> {
        vn_mask
            .chunks(self.bits_per_symbol())
            .map(|c| c.iter().any(|&b| b))
            .collect()
    }
}

/// Received frame with the attacker's accumulated perturbation.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalFrame {
    pub clean: Vec<Complex64>,
    pub perturbation: Vec<Complex64>,
}

impl SignalFrame {
    pub fn new(clean: Vec<Complex64>) -> Self {
        let perturbation = vec![Complex64::new(0.0, 0.0); clean.len()];
        Self { clean, perturbation }
    }

    pub fn len(&self) -> usize {
        self.clean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clean.is_empty()
    }

    /// Perturbed view `y = r + s`.
    pub fn perturbed(&self) -> Vec<Complex64> {
        self.clean.iter().zip(&self.perturbation).map(|(r, s)| r + s).collect()
    }

    /// `‖s‖²`
    pub fn power(&self) -> f64 {
        complex_power(&self.perturbation)
    }
}
