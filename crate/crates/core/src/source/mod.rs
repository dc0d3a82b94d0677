//! Synthetic sources, a uniform midrise scalar quantizer and distortion
//! metrics.
//!
//! Distortion `D(x, x̂)` is the total squared error `‖x − x̂‖²` throughout;
//! per-dimension MSE appears only inside PSNR.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::math::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Gaussian,
    SparseGaussian,
    Patch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SourceSpec {
    pub kind: SourceKind,
    pub m: usize,
    pub mean: f64,
    pub variance: f64,
    /// fraction of nonzero coordinates (sparse kind only)
    pub sparsity: f64,
    /// clip samples into `[0, 1]`
    pub clip: bool,
}

impl Default for SourceSpec {
    fn default() -> Self {
        Self {
            kind: SourceKind::Gaussian,
            m: 16,
            mean: 0.5,
            variance: 0.0225,
            sparsity: 0.25,
            clip: false,
        }
    }
}

impl SourceSpec {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::Param("source dimension must be positive".into()));
        }
        if !(self.variance > 0.0) {
            return Err(Error::Param("source variance must be positive".into()));
        }
        if self.kind == SourceKind::SparseGaussian && !(self.sparsity > 0.0 && self.sparsity <= 1.0) {
            return Err(Error::Param("sparsity must lie in (0, 1]".into()));
        }
        if self.kind == SourceKind::Patch {
            let side = (self.m as f64).sqrt().round() as usize;
            if side * side != self.m {
                return Err(Error::Param(format!("patch sources need a square M, got {}", self.m)));
            }
        }
        Ok(())
    }

    /// Nonzero coordinates per sparse sample.
    pub fn nonzeros(&self) -> usize {
        ((self.sparsity * self.m as f64) - 1e-9).ceil() as usize
    }

    /// `E‖x‖²` where known in closed form (unclipped Gaussian kinds).
    pub fn mean_energy(&self) -> Option<f64> {
        match (self.kind, self.clip) {
            (SourceKind::Gaussian, false) => Some(self.m as f64 * (self.mean * self.mean + self.variance)),
            (SourceKind::SparseGaussian, false) => {
                Some(self.nonzeros() as f64 * (self.mean * self.mean + self.variance))
            }
            _ => None,
        }
    }
}

/// `count` samples of dimension `M`.
pub fn generate(spec: &SourceSpec, count: usize, rng: &mut RngStream) -> Result<Vec<Vec<f64>>> {
    spec.validate()?;
    let sd = spec.variance.sqrt();
    let samples = (0..count)
        .map(|_| {
            let mut x = match spec.kind {
                SourceKind::Gaussian => (0..spec.m).map(|_| spec.mean + sd * rng.normal()).collect(),
                SourceKind::SparseGaussian => {
                    let mut idx: Vec<usize> = (0..spec.m).collect();
                    rng.shuffle(&mut idx);
                    let mut x = vec![0.0; spec.m];
                    for &i in &idx[..spec.nonzeros()] {
                        x[i] = spec.mean + sd * rng.normal();
                    }
                    x
                }
                SourceKind::Patch => patch(spec.m, rng),
            };
            if spec.clip {
                x.iter_mut().for_each(|v: &mut f64| *v = v.clamp(0.0, 1.0));
            }
            x
        })
        .collect();
    Ok(samples)
}

/// Smooth grayscale patch in `[0, 1]`: a random gradient plus two
/// low-frequency cosines, affinely mapped to a random sub-range.
fn patch(m: usize, rng: &mut RngStream) -> Vec<f64> {
    let side = (m as f64).sqrt().round() as usize;
    let (gx, gy) = (rng.normal(), rng.normal());
    let waves: Vec<(f64, f64, f64, f64)> = (0..2)
        .map(|_| {
            (
                std::f64::consts::PI * rng.uniform() * 2.0 / side as f64,
                std::f64::consts::PI * rng.uniform() * 2.0 / side as f64,
                2.0 * std::f64::consts::PI * rng.uniform(),
                0.5 * rng.normal(),
            )
        })
        .collect();
    let raw: Vec<f64> = (0..m)
        .map(|k| {
            let (r, c) = ((k / side) as f64, (k % side) as f64);
            let t = (gx * r + gy * c) / side as f64;
            t + waves.iter().map(|(fr, fc, ph, a)| a * (fr * r + fc * c + ph).cos()).sum::<f64>()
        })
        .collect();
    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = (hi - lo).max(1e-12);
    let base = 0.3 * rng.uniform();
    let width = 0.4 + 0.3 * rng.uniform();
    raw.iter().map(|v| base + width * (v - lo) / span).collect()
}

/// Uniform midrise quantizer over `[lo, hi]` with `2^bits` cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuantizerSpec {
    pub bits_per_sample: usize,
    pub lo: f64,
    pub hi: f64,
}

impl Default for QuantizerSpec {
    fn default() -> Self {
        Self {
            bits_per_sample: 8,
            lo: 0.0,
            hi: 1.0,
        }
    }
}

impl QuantizerSpec {
    pub fn validate(&self) -> Result<()> {
        if self.bits_per_sample == 0 || self.bits_per_sample > 24 {
            return Err(Error::Param("bits per sample must be in 1..=24".into()));
        }
        if !(self.lo < self.hi) {
            return Err(Error::Param("quantizer range needs lo < hi".into()));
        }
        Ok(())
    }

    pub fn levels(&self) -> usize {
        1 << self.bits_per_sample
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / self.levels() as f64
    }

    pub fn index(&self, v: f64) -> usize {
        let i = ((v - self.lo) / self.step()).floor();
        i.clamp(0.0, (self.levels() - 1) as f64) as usize
    }

    pub fn reconstruct(&self, index: usize) -> f64 {
        self.lo + (index as f64 + 0.5) * self.step()
    }

    /// Bits (most-significant first per sample) and the dequantized vector.
    pub fn quantize(&self, x: &[f64]) -> (Vec<u8>, Vec<f64>) {
        let q = self.bits_per_sample;
        let mut bits = Vec::with_capacity(x.len() * q);
        let mut xq = Vec::with_capacity(x.len());
        for &v in x {
            let i = self.index(v);
            bits.extend((0..q).rev().map(|s| ((i >> s) & 1) as u8));
            xq.push(self.reconstruct(i));
        }
        (bits, xq)
    }

    pub fn dequantize(&self, bits: &[u8]) -> Result<Vec<f64>> {
        let q = self.bits_per_sample;
        if !bits.len().is_multiple_of(q) {
            return Err(Error::Param(format!("{} bits are not whole {q}-bit samples", bits.len())));
        }
        Ok(bits
            .chunks(q)
            .map(|c| self.reconstruct(c.iter().fold(0usize, |acc, &b| (acc << 1) | (b & 1) as usize)))
            .collect())
    }
}

/// Reconstruction quality of one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    /// `‖x − x̂‖²`
    pub distortion: f64,
    /// `‖x − x̂‖² / M`
    pub mse: f64,
    /// `+∞` when `mse == 0`
    pub psnr_db: f64,
    /// `None` when `‖x‖ = 0`; `−∞` for a perfect reconstruction
    pub nmse_db: Option<f64>,
}

pub fn squared_error(x: &[f64], x_hat: &[f64]) -> f64 {
    x.iter().zip(x_hat).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// PSNR at peak 1.
pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    }
}

pub fn mse_from_psnr(psnr_db: f64) -> f64 {
    10f64.powf(-psnr_db / 10.0)
}

pub fn metrics(x: &[f64], x_hat: &[f64]) -> Result<Metrics> {
    check_len(x.len(), x_hat.len())?;
    if x.is_empty() {
        return Err(Error::Param("empty sample".into()));
    }
    let distortion = squared_error(x, x_hat);
    let mse = distortion / x.len() as f64;
    let energy: f64 = x.iter().map(|v| v * v).sum();
    let nmse_db = (energy > 0.0).then(|| {
        if distortion == 0.0 {
            f64::NEG_INFINITY
        } else {
            10.0 * (distortion / energy).log10()
        }
    });
    Ok(Metrics {
        distortion,
        mse,
        psnr_db: psnr_from_mse(mse),
        nmse_db,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_moments() {
        let spec = SourceSpec {
            m: 10,
            mean: 0.0,
            variance: 1.0,
            ..Default::default()
        };
        let xs = generate(&spec, 10_000, &mut RngStream::new(1, 0)).unwrap();
        let all: Vec<f64> = xs.concat();
        let n = all.len() as f64;
        let mean = all.iter().sum::<f64>() / n;
        let var = all.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!((var - 1.0).abs() < 0.02, "{var}");
    }

    #[test]
    fn sparse_has_exact_support() {
        let spec = SourceSpec {
            kind: SourceKind::SparseGaussian,
            m: 1024,
            sparsity: 0.25,
            mean: 0.0,
            variance: 1.0,
            clip: false,
        };
        for x in generate(&spec, 20, &mut RngStream::new(2, 0)).unwrap() {
            assert_eq!(x.iter().filter(|&&v| v != 0.0).count(), 256);
        }
    }

    #[test]
    fn generation_is_deterministic_and_patches_bounded() {
        let spec = SourceSpec {
            kind: SourceKind::Patch,
            m: 64,
            ..Default::default()
        };
        let a = generate(&spec, 5, &mut RngStream::new(3, 1)).unwrap();
        let b = generate(&spec, 5, &mut RngStream::new(3, 1)).unwrap();
        assert_eq!(a, b);
        assert!(a.concat().iter().all(|v| (0.0..=1.0).contains(v)));
        let bad = SourceSpec { m: 60, ..spec };
        assert!(generate(&bad, 1, &mut RngStream::new(0, 0)).is_err());
    }

    #[test]
    fn bin_centres_are_exact() {
        let q = QuantizerSpec {
            bits_per_sample: 3,
            lo: 0.0,
            hi: 1.0,
        };
        let centres: Vec<f64> = (0..8).map(|i| q.reconstruct(i)).collect();
        let (bits, xq) = q.quantize(&centres);
        assert_eq!(xq, centres);
        assert_eq!(bits.len(), 24);
        assert_eq!(&bits[3..6], &[0, 0, 1]);
        assert_eq!(q.dequantize(&bits).unwrap(), centres);
    }

    #[test]
    fn high_resolution_noise() {
        let q = QuantizerSpec {
            bits_per_sample: 8,
            lo: -4.0,
            hi: 4.0,
        };
        let mut rng = RngStream::new(4, 0);
        let x: Vec<f64> = (0..200_000).map(|_| rng.normal()).collect();
        let (_, xq) = q.quantize(&x);
        let mse = squared_error(&x, &xq) / x.len() as f64;
        let want = q.step() * q.step() / 12.0;
        assert!((mse / want - 1.0).abs() < 0.1, "{mse} vs {want}");
    }

    #[test]
    fn one_bit_is_a_sign_quantizer() {
        let q = QuantizerSpec {
            bits_per_sample: 1,
            lo: -1.0,
            hi: 1.0,
        };
        let (bits, xq) = q.quantize(&[-0.3, 0.2, -5.0, 7.0]);
        assert_eq!(bits, vec![0, 1, 0, 1]);
        assert_eq!(xq, vec![-0.5, 0.5, -0.5, 0.5]);
    }

    #[test]
    fn requantizing_is_idempotent() {
        let q = QuantizerSpec::default();
        let mut rng = RngStream::new(5, 0);
        let x: Vec<f64> = (0..500).map(|_| rng.uniform() * 1.4 - 0.2).collect();
        let (bits, xq) = q.quantize(&x);
        assert_eq!(q.quantize(&xq).0, bits);
    }

    #[test]
    fn metric_conventions() {
        let x = [0.2, 0.4, 0.6];
        let m = metrics(&x, &x).unwrap();
        assert_eq!(m.mse, 0.0);
        assert_eq!(m.psnr_db, f64::INFINITY);
        assert_eq!(m.nmse_db, Some(f64::NEG_INFINITY));
        assert!(metrics(&[0.0, 0.0], &[1.0, 0.0]).unwrap().nmse_db.is_none());
        let z = metrics(&x, &[0.0; 3]).unwrap();
        assert!(z.nmse_db.unwrap().abs() < 1e-12);
        assert!((psnr_from_mse(3e-2) - 15.228787452803376).abs() < 1e-9);
        let y = [0.1, 0.9, 0.3];
        assert_eq!(metrics(&x, &y).unwrap().mse, metrics(&y, &x).unwrap().mse);
        for mse in [1e-5, 3e-2, 0.7] {
            assert!((mse_from_psnr(psnr_from_mse(mse)) - mse).abs() < 1e-9 * mse);
        }
    }
}
