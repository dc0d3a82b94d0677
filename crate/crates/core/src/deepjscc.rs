//! Desk-scale DeepJSCC: dense encoder/decoder trained end to end through a
//! real AWGN channel, with exact decoder Jacobians and empirical Lipschitz
//! estimates.
//!
//! The channel carries `N` real dimensions per sample. Encoder outputs are
//! power-normalized so that `E‖z‖² = N`: per batch while training, and with
//! the training-set scale frozen at inference.

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::math::{spectral_norm, RealMatrix, RngStream};
use crate::nn::{to_batch, Activation, Adam, DenseNetwork};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    /// channel gain
    pub h: f64,
    /// noise variance per real dimension
    pub sigma2: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 128,
            learning_rate: 1e-3,
            weight_decay: 1e-4,
            h: 1.0,
            sigma2: 0.1,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Param("need positive learning rate, batch size and epochs".into()));
        }
        if !(self.sigma2 >= 0.0) || !(self.h > 0.0) {
            return Err(Error::Param("need sigma2 >= 0 and h > 0".into()));
        }
        Ok(())
    }
}

/// Encoder `M → hidden → N` (rectifier, linear head) and decoder
/// `N → hidden → hidden → M` (rectifier, sigmoid head).
pub fn default_networks(m: usize, n: usize, hidden: usize, rng: &mut RngStream) -> Result<(DenseNetwork, DenseNetwork)> {
    let f = DenseNetwork::random(&[m, hidden, n], &[Activation::Relu, Activation::Linear], rng)?;
    let g = DenseNetwork::random(
        &[n, hidden, hidden, m],
        &[Activation::Relu, Activation::Relu, Activation::Sigmoid],
        rng,
    )?;
    Ok((f, g))
}

/// Trained encoder/decoder pair with its frozen inference power scale.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticChain {
    pub encoder: DenseNetwork,
    pub decoder: DenseNetwork,
    /// multiplies raw encoder output at inference
    pub power_scale: f64,
}

impl SemanticChain {
    pub fn m(&self) -> usize {
        self.encoder.input_dim()
    }

    /// Real channel dimensions.
    pub fn n(&self) -> usize {
        self.encoder.output_dim()
    }

    /// Per-frame encoding with the frozen training-set scale.
    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.encoder.forward(x)?.into_iter().map(|v| v * self.power_scale).collect())
    }

    /// Encodes a batch normalized so its mean `‖z‖²` is exactly `N`.
    pub fn encode_batch(&self, xs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        if let Some(bad) = xs.iter().find(|x| x.len() != self.m()) {
            return Err(Error::Dim {
                expected: self.m(),
                got: bad.len(),
            });
        }
        let raw = self.encoder.forward_batch(&to_batch(xs))?.output().clone();
        let (z, _) = normalize_batch(&raw);
        Ok(z.outer_iter().map(|r| r.to_vec()).collect())
    }

    pub fn decode(&self, r: &[f64]) -> Result<Vec<f64>> {
        self.decoder.forward(r)
    }

    /// `∂g/∂r` at `r` (`M × N`).
    pub fn jacobian(&self, r: &[f64]) -> Result<RealMatrix> {
        self.decoder.jacobian(r)
    }
}

/// Scales a batch of raw encoder outputs to mean row power `N`; returns the
/// factor used.
fn normalize_batch(raw: &Array2<f64>) -> (Array2<f64>, f64) {
    let (rows, n) = raw.dim();
    let total: f64 = raw.iter().map(|v| v * v).sum();
    let c = if total > 0.0 { ((rows * n) as f64 / total).sqrt() } else { 1.0 };
    (raw * c, c)
}

/// Trains `f` and `g` end to end on `data` with fresh channel noise per
/// batch. Returns the chain and the mean per-dimension training MSE of each
/// epoch.
pub fn train(
    mut f: DenseNetwork,
    mut g: DenseNetwork,
    data: &[Vec<f64>],
    cfg: &TrainingConfig,
    rng: &mut RngStream,
) -> Result<(SemanticChain, Vec<f64>)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Param("empty training set".into()));
    }
    let m = f.input_dim();
    check_len(m, g.output_dim())?;
    check_len(f.output_dim(), g.input_dim())?;
    if let Some(bad) = data.iter().find(|x| x.len() != m) {
        return Err(Error::Dim {
            expected: m,
            got: bad.len(),
        });
    }
    let mut opt_f = Adam::new(&f, cfg.learning_rate, cfg.weight_decay);
    let mut opt_g = Adam::new(&g, cfg.learning_rate, cfg.weight_decay);
    let sd = cfg.sigma2.sqrt();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut step = 0;
    for _epoch in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            step += 1;
            let bs = chunk.len();
            let x = Array2::from_shape_fn((bs, m), |(r, c)| data[chunk[r]][c]);
            let enc = f.forward_batch(&x)?;
            let raw = enc.output();
            let (z, c) = normalize_batch(raw);
            let noise = Array2::from_shape_fn(z.raw_dim(), |_| sd * rng.normal());
            let r = &z * cfg.h + &noise;
            let dec = g.forward_batch(&r)?;
            let err = dec.output() - &x;
            let loss = err.iter().map(|v| v * v).sum::<f64>() / (bs * m) as f64;
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    step,
                    detail: format!("training loss became {loss}"),
                });
            }
            epoch_loss += loss * bs as f64;

            let grad_out = err * (2.0 / (bs * m) as f64);
            let (grads_g, grad_r) = g.backward_batch(&dec, &grad_out);
            let grad_z = grad_r * cfg.h;
            // through z = c(raw)·raw with c = √(B·N / Σ raw²)
            let total: f64 = raw.iter().map(|v| v * v).sum();
            let inner: f64 = (&grad_z * raw).sum();
            let grad_raw = &grad_z * c - &(raw * (c * inner / total.max(f64::MIN_POSITIVE)));
            let (grads_f, _) = f.backward_batch(&enc, &grad_raw);
            if !grads_f.is_finite() || !grads_g.is_finite() {
                return Err(Error::Diverged {
                    step,
                    detail: "non-finite gradient".into(),
                });
            }
            opt_g.step(&mut g, &grads_g);
            opt_f.step(&mut f, &grads_f);
        }
        curve.push(epoch_loss / data.len() as f64);
    }
    let raw = f.forward_batch(&to_batch(data))?.output().clone();
    let (_, power_scale) = normalize_batch(&raw);
    Ok((
        SemanticChain {
            encoder: f,
            decoder: g,
            power_scale,
        },
        curve,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LipschitzEstimate {
    /// max sampled `‖J_g(r)‖₂`, a lower estimate of the true constant
    pub g_hat: f64,
    pub sample_count: usize,
    pub mean_norm: f64,
    pub min_norm: f64,
}

/// Largest decoder Jacobian spectral norm over `inputs`.
pub fn estimate_lipschitz(g: &DenseNetwork, inputs: &[Vec<f64>]) -> Result<LipschitzEstimate> {
    if inputs.is_empty() {
        return Err(Error::Param("no Lipschitz samples".into()));
    }
    let norms: Vec<f64> = inputs
        .iter()
        .map(|r| Ok(spectral_norm(&g.jacobian(r)?, 1e-10)))
        .collect::<Result<_>>()?;
    Ok(LipschitzEstimate {
        g_hat: norms.iter().copied().fold(0.0, f64::max),
        sample_count: norms.len(),
        mean_norm: norms.iter().sum::<f64>() / norms.len() as f64,
        min_norm: norms.iter().copied().fold(f64::INFINITY, f64::min),
    })
}

/// Mean per-dimension squared error of `decode(h·encode(x) + ω)` over `data`.
pub fn evaluate_mse(chain: &SemanticChain, data: &[Vec<f64>], h: f64, sigma2: f64, rng: &mut RngStream) -> Result<f64> {
    let mut total = 0.0;
    for x in data {
        let z = chain.encode(x)?;
        let r = crate::modem::transmit_real(&z, h, sigma2, rng);
        let xh = chain.decode(&r)?;
        total += crate::source::squared_error(x, &xh);
    }
    Ok(total / (data.len() * chain.m()) as f64)
}

/// Column sums of squares of a batch, used by tests of the power contract.
pub fn mean_row_power(rows: &[Vec<f64>]) -> f64 {
    let b = to_batch(rows);
    b.mapv(|v| v * v).sum_axis(Axis(1)).mean().unwrap_or(0.0)
}
