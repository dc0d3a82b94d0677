//! Small dense networks with hand-written reverse-mode gradients, Adam /
//! AdamW, and a versioned flat binary weight format.

mod io;

pub use io::{load_network, read_network, save_network, write_network};

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::math::{RealMatrix, RngStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Sigmoid,
    Linear,
}

impl Activation {
    pub fn code(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Sigmoid => 1,
            Activation::Linear => 2,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(Activation::Relu),
            1 => Ok(Activation::Sigmoid),
            2 => Ok(Activation::Linear),
            c => Err(Error::Format(format!("unknown activation code {c}"))),
        }
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Sigmoid => 1.0 / (1.0 + (-v).exp()),
            Activation::Linear => v,
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`;
    /// the rectifier takes subgradient 0 at 0.
    fn slope(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Linear => 1.0,
        }
    }
}

/// Fully connected layer `a = act(W·x + b)`, `W` is `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    pub act: Activation,
}

impl Layer {
    pub fn input_dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.w.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseNetwork {
    layers: Vec<Layer>,
}

/// Per-layer pre-activations and outputs of a batch forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: Array2<f64>,
    pre: Vec<Array2<f64>>,
    post: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        self.post.last().unwrap_or(&self.input)
    }
}

/// Parameter gradients, one `(dW, db)` pair per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<(Array2<f64>, Array1<f64>)>);

impl Gradients {
    pub fn zeros_like(net: &DenseNetwork) -> Self {
        Gradients(
            net.layers
                .iter()
                .map(|l| (Array2::zeros(l.w.raw_dim()), Array1::zeros(l.b.raw_dim())))
                .collect(),
        )
    }

    pub fn norm(&self) -> f64 {
        self.0
            .iter()
            .map(|(w, b)| w.iter().map(|v| v * v).sum::<f64>() + b.iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|(w, b)| w.iter().chain(b.iter()).all(|v| v.is_finite()))
    }
}

impl DenseNetwork {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Param("network needs at least one layer".into()));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::Param(format!(
                    "layer {i} outputs {} values but layer {} expects {}",
                    pair[0].output_dim(),
                    i + 1,
                    pair[1].input_dim()
                )));
            }
        }
        for l in &layers {
            if l.b.len() != l.output_dim() {
                return Err(Error::Param("bias length must equal layer output".into()));
            }
            if l.w.iter().chain(l.b.iter()).any(|v| !v.is_finite()) {
                return Err(Error::Param("network parameters must be finite".into()));
            }
        }
        Ok(Self { layers })
    }

    /// He-uniform weights for rectifier layers, Glorot-uniform otherwise;
    /// zero biases. `dims` lists layer widths from input to output.
    pub fn random(dims: &[usize], acts: &[Activation], rng: &mut RngStream) -> Result<Self> {
        if dims.len() != acts.len() + 1 {
            return Err(Error::Param("need one activation per layer".into()));
        }
        let layers = acts
            .iter()
            .enumerate()
            .map(|(i, &act)| {
                let (fan_in, fan_out) = (dims[i], dims[i + 1]);
                let limit = match act {
                    Activation::Relu => (6.0 / fan_in as f64).sqrt(),
                    _ => (6.0 / (fan_in + fan_out) as f64).sqrt(),
                };
                Layer {
                    w: Array2::from_shape_fn((fan_out, fan_in), |_| limit * (2.0 * rng.uniform() - 1.0)),
                    b: Array1::zeros(fan_out),
                    act,
                }
            })
            .collect();
        Self::new(layers)
    }

    /// Single linear layer `y = W·x + b`.
    pub fn linear(w: &RealMatrix, b: &[f64]) -> Result<Self> {
        let arr = Array2::from_shape_vec((w.rows(), w.cols()), w.data().to_vec()).expect("shape");
        Self::new(vec![Layer {
            w: arr,
            b: Array1::from_vec(b.to_vec()),
            act: Activation::Linear,
        }])
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").output_dim()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.input_dim(), x.len())?;
        let mut a = Array1::from_vec(x.to_vec());
        for l in &self.layers {
            let mut z = l.w.dot(&a);
            z += &l.b;
            z.mapv_inplace(|v| l.act.apply(v));
            a = z;
        }
        Ok(a.to_vec())
    }

    /// Forward pass on a batch (one sample per row).
    pub fn forward_batch(&self, x: &Array2<f64>) -> Result<ForwardCache> {
        check_len(self.input_dim(), x.ncols())?;
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post: Vec<Array2<f64>> = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let input = post.last().unwrap_or(x);
            let mut z = input.dot(&l.w.t());
            z += &l.b;
            let a = z.mapv(|v| l.act.apply(v));
            pre.push(z);
            post.push(a);
        }
        Ok(ForwardCache {
            input: x.clone(),
            pre,
            post,
        })
    }

    /// Reverse pass: parameter gradients summed over the batch and the
    /// gradient with respect to the batch input.
    pub fn backward_batch(&self, cache: &ForwardCache, grad_out: &Array2<f64>) -> (Gradients, Array2<f64>) {
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = grad_out.clone();
        for (i, l) in self.layers.iter().enumerate().rev() {
            let (z, a) = (&cache.pre[i], &cache.post[i]);
            ndarray::Zip::from(&mut delta)
                .and(z)
                .and(a)
                .for_each(|d, &zv, &av| *d *= l.act.slope(zv, av));
            let input = if i == 0 { &cache.input } else { &cache.post[i - 1] };
            let dw = delta.t().dot(input);
            let db = delta.sum_axis(Axis(0));
            grads.push((dw, db));
            delta = delta.dot(&l.w);
        }
        grads.reverse();
        (Gradients(grads), delta)
    }

    /// Output and vector-Jacobian product `Jᵀ·v` at one input.
    pub fn vjp(&self, x: &[f64], v: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        check_len(self.output_dim(), v.len())?;
        let xb = Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("row");
        let cache = self.forward_batch(&xb)?;
        let gb = Array2::from_shape_vec((1, v.len()), v.to_vec()).expect("row");
        let (_, gin) = self.backward_batch(&cache, &gb);
        Ok((cache.output().row(0).to_vec(), gin.row(0).to_vec()))
    }

    /// Exact Jacobian `∂out/∂in` (`output_dim × input_dim`), accumulated
    /// from the output layer backwards.
    pub fn jacobian(&self, x: &[f64]) -> Result<RealMatrix> {
        let xb = Array2::from_shape_vec((1, x.len()), x.to_vec()).map_err(|e| Error::Param(e.to_string()))?;
        let cache = self.forward_batch(&xb)?;
        let mut acc: Option<Array2<f64>> = None;
        for (i, l) in self.layers.iter().enumerate().rev() {
            let slopes: Array1<f64> = cache.pre[i]
                .row(0)
                .iter()
                .zip(cache.post[i].row(0))
                .map(|(&z, &a)| l.act.slope(z, a))
                .collect();
            let scaled = &l.w * &slopes.view().insert_axis(Axis(1));
            acc = Some(match acc {
                None => scaled,
                Some(j) => j.dot(&scaled),
            });
        }
        let j = acc.expect("non-empty");
        RealMatrix::new(j.nrows(), j.ncols(), j.iter().copied().collect())
    }

    pub fn apply_update(&mut self, f: impl Fn(usize, &mut Layer)) {
        for (i, l) in self.layers.iter_mut().enumerate() {
            f(i, l);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w.iter().chain(l.b.iter()).all(|v| v.is_finite()))
    }
}

/// Adam with optional decoupled weight decay (AdamW when `weight_decay > 0`).
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    t: u64,
    m: Gradients,
    v: Gradients,
}

impl Adam {
    pub fn new(net: &DenseNetwork, lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            t: 0,
            m: Gradients::zeros_like(net),
            v: Gradients::zeros_like(net),
        }
    }

    pub fn step(&mut self, net: &mut DenseNetwork, grads: &Gradients) {
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        let (lr, eps, wd) = (self.lr, self.eps, self.weight_decay);
        for (i, layer) in net.layers.iter_mut().enumerate() {
            let (gw, gb) = &grads.0[i];
            let (mw, mb) = &mut self.m.0[i];
            let (vw, vb) = &mut self.v.0[i];
            let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64, decay: bool| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                if decay {
                    *p -= lr * wd * *p;
                }
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            };
            ndarray::Zip::from(&mut layer.w)
                .and(gw)
                .and(mw)
                .and(vw)
                .for_each(|p, &g, m, v| update(p, g, m, v, wd > 0.0));
            ndarray::Zip::from(&mut layer.b)
                .and(gb)
                .and(mb)
                .and(vb)
                .for_each(|p, &g, m, v| update(p, g, m, v, false));
        }
    }
}

/// Adam on a plain parameter vector.
#[derive(Debug, Clone)]
pub struct VectorAdam {
    pub lr: f64,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl VectorAdam {
    pub fn new(dim: usize, lr: f64) -> Self {
        Self {
            lr,
            t: 0,
            m: vec![0.0; dim],
            v: vec![0.0; dim],
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        self.t += 1;
        let c1 = 1.0 - B1.powi(self.t as i32);
        let c2 = 1.0 - B2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = B1 * self.m[i] + (1.0 - B1) * grad[i];
            self.v[i] = B2 * self.v[i] + (1.0 - B2) * grad[i] * grad[i];
            params[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + 1e-8);
        }
    }
}

/// Row view helper for callers holding flat samples.
pub fn to_batch(rows: &[Vec<f64>]) -> Array2<f64> {
    let cols = rows.first().map_or(0, Vec::len);
    Array2::from_shape_fn((rows.len(), cols), |(r, c)| rows[r][c])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_net(rng: &mut RngStream) -> DenseNetwork {
        let mut net = DenseNetwork::random(
            &[5, 7, 6, 3],
            &[Activation::Relu, Activation::Sigmoid, Activation::Sigmoid],
            rng,
        )
        .unwrap();
        for l in net.layers_mut() {
            l.b.iter_mut().for_each(|b| *b = 0.1 * rng.normal());
        }
        net
    }

    fn fd_jacobian(net: &DenseNetwork, x: &[f64], h: f64) -> Vec<Vec<f64>> {
        let m = net.output_dim();
        let mut cols = Vec::new();
        for j in 0..x.len() {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[j] += h;
            xm[j] -= h;
            let (fp, fm) = (net.forward(&xp).unwrap(), net.forward(&xm).unwrap());
            cols.push((0..m).map(|i| (fp[i] - fm[i]) / (2.0 * h)).collect::<Vec<_>>());
        }
        cols
    }

    #[test]
    fn linear_jacobian_is_the_weight() {
        let w = RealMatrix::from_fn(3, 4, |r, c| (r * 4 + c) as f64 - 5.0);
        let net = DenseNetwork::linear(&w, &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(net.jacobian(&[0.3, -1.0, 2.0, 0.0]).unwrap(), w);
        let y = net.forward(&[1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(y, vec![-4.0, 1.0, 6.0]);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let mut rng = RngStream::new(3, 0);
        for _ in 0..50 {
            let net = random_net(&mut rng);
            let x: Vec<f64> = (0..5).map(|_| rng.normal()).collect();
            let j = net.jacobian(&x).unwrap();
            let fd = fd_jacobian(&net, &x, 1e-6);
            for c in 0..5 {
                for r in 0..3 {
                    let (a, b) = (j[(r, c)], fd[c][r]);
                    assert!((a - b).abs() <= 1e-5 * a.abs().max(1e-3), "{a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn parameter_gradients_match_finite_differences() {
        let mut rng = RngStream::new(4, 0);
        let net = random_net(&mut rng);
        let x = Array2::from_shape_fn((4, 5), |_| rng.normal());
        let target = Array2::from_shape_fn((4, 3), |_| rng.uniform());
        let loss = |n: &DenseNetwork| {
            let out = n.forward_batch(&x).unwrap();
            (out.output() - &target).mapv(|v| v * v).sum()
        };
        let cache = net.forward_batch(&x).unwrap();
        let g = 2.0 * (cache.output() - &target);
        let (grads, _) = net.backward_batch(&cache, &g);
        for li in 0..3 {
            for idx in [(0usize, 0usize), (1, 2)] {
                let mut p = net.clone();
                let mut m = net.clone();
                p.layers_mut()[li].w[idx] += 1e-6;
                m.layers_mut()[li].w[idx] -= 1e-6;
                let fd = (loss(&p) - loss(&m)) / 2e-6;
                let an = grads.0[li].0[idx];
                assert!((fd - an).abs() <= 1e-5 * an.abs().max(1e-3), "{fd} vs {an}");
            }
            let mut p = net.clone();
            let mut m = net.clone();
            p.layers_mut()[li].b[0] += 1e-6;
            m.layers_mut()[li].b[0] -= 1e-6;
            let fd = (loss(&p) - loss(&m)) / 2e-6;
            assert!((fd - grads.0[li].1[0]).abs() <= 1e-5 * fd.abs().max(1e-3));
        }
    }

    #[test]
    fn sigmoid_head_is_bounded() {
        let mut rng = RngStream::new(5, 0);
        let net = random_net(&mut rng);
        for _ in 0..100 {
            let x: Vec<f64> = (0..5).map(|_| 50.0 * rng.normal()).collect();
            assert!(net.forward(&x).unwrap().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn rejects_bad_shapes() {
        let l = |i, o| Layer {
            w: Array2::zeros((o, i)),
            b: Array1::zeros(o),
            act: Activation::Linear,
        };
        assert!(DenseNetwork::new(vec![l(3, 4), l(5, 2)]).is_err());
        assert!(DenseNetwork::new(vec![]).is_err());
        let net = DenseNetwork::new(vec![l(3, 4)]).unwrap();
        assert!(net.forward(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn adam_fits_a_line() {
        let mut rng = RngStream::new(6, 0);
        let mut net = DenseNetwork::random(&[1, 1], &[Activation::Linear], &mut rng).unwrap();
        let mut opt = Adam::new(&net, 0.05, 0.0);
        let x = Array2::from_shape_fn((16, 1), |(i, _)| i as f64 / 8.0 - 1.0);
        let y = x.mapv(|v| 3.0 * v - 0.5);
        for _ in 0..2000 {
            let cache = net.forward_batch(&x).unwrap();
            let g = 2.0 * (cache.output() - &y) / 16.0;
            let (grads, _) = net.backward_batch(&cache, &g);
            opt.step(&mut net, &grads);
        }
        let l = &net.layers()[0];
        assert!((l.w[(0, 0)] - 3.0).abs() < 1e-3 && (l.b[0] + 0.5).abs() < 1e-3);
    }
}
