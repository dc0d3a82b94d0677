use super::ParityCheckMatrix;

/// Magnitude bound applied to channel LLRs and every BP message.
pub const LLR_CLIP: f64 = 25.0;

/// Result of one decoding attempt.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeOutcome {
    /// Hard decisions on the final posterior (`1` where the LLR is negative).
    pub bits: Vec<u8>,
    /// Every check satisfied by a fully determined hard decision.
    pub converged: bool,
    pub iters_used: usize,
}

/// Log-domain sum-product (tanh rule) decoder with pre-built edge tables.
///
/// LLR convention: positive favours bit 0. A posterior of exactly zero is an
/// undetermined bit and blocks convergence.
#[derive(Debug, Clone)]
pub struct BpDecoder {
    n: usize,
    /// edges grouped by check: (start offset, variable per edge)
    check_start: Vec<usize>,
    edge_var: Vec<usize>,
    /// for each variable, the edge ids touching it
    var_edges: Vec<Vec<usize>>,
}

impl BpDecoder {
    pub fn new(h: &ParityCheckMatrix) -> Self {
        let mut check_start = Vec::with_capacity(h.m() + 1);
        let mut edge_var = Vec::with_capacity(h.edge_count());
        let mut var_edges = vec![Vec::new(); h.n()];
        for row in h.checks() {
            check_start.push(edge_var.len());
            for &v in row {
                var_edges[v].push(edge_var.len());
                edge_var.push(v);
            }
        }
        check_start.push(edge_var.len());
        Self {
            n: h.n(),
            check_start,
            edge_var,
            var_edges,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn decode(&self, llr: &[f64], max_iters: usize) -> DecodeOutcome {
        assert_eq!(llr.len(), self.n, "LLR length must equal block length");
        let max_iters = max_iters.max(1);
        let channel: Vec<f64> = llr.iter().map(|&l| l.clamp(-LLR_CLIP, LLR_CLIP)).collect();
        let n_edges = self.edge_var.len();
        let mut v2c: Vec<f64> = self.edge_var.iter().map(|&v| channel[v]).collect();
        let mut c2v = vec![0.0; n_edges];
        let mut tanh_buf = Vec::new();
        let mut suffix = Vec::new();
        let mut posterior = channel.clone();
        let mut bits = vec![0u8; self.n];

        for iter in 1..=max_iters {
            // check-node update
            for c in 0..self.check_start.len() - 1 {
                let (lo, hi) = (self.check_start[c], self.check_start[c + 1]);
                let deg = hi - lo;
                tanh_buf.clear();
                tanh_buf.extend(v2c[lo..hi].iter().map(|m| (0.5 * m).tanh()));
                suffix.clear();
                suffix.resize(deg + 1, 1.0);
                for i in (0..deg).rev() {
                    suffix[i] = suffix[i + 1] * tanh_buf[i];
                }
                let mut prefix = 1.0;
                for i in 0..deg {
                    let prod = (prefix * suffix[i + 1]).clamp(-1.0 + 1e-15, 1.0 - 1e-15);
                    c2v[lo + i] = (2.0 * prod.atanh()).clamp(-LLR_CLIP, LLR_CLIP);
                    prefix *= tanh_buf[i];
                }
            }
            // variable-node update and tentative decision
            let mut determined = true;
            for v in 0..self.n {
                let total = channel[v] + self.var_edges[v].iter().map(|&e| c2v[e]).sum::<f64>();
                posterior[v] = total;
                if total == 0.0 {
                    determined = false;
                }
                bits[v] = u8::from(total < 0.0);
                for &e in &self.var_edges[v] {
                    v2c[e] = (total - c2v[e]).clamp(-LLR_CLIP, LLR_CLIP);
                }
            }
            if determined && self.checks_satisfied(&bits) {
                return DecodeOutcome {
                    bits,
                    converged: true,
                    iters_used: iter,
                };
            }
        }
        DecodeOutcome {
            bits,
            converged: false,
            iters_used: max_iters,
        }
    }

    fn checks_satisfied(&self, bits: &[u8]) -> bool {
        (0..self.check_start.len() - 1).all(|c| {
            self.edge_var[self.check_start[c]..self.check_start[c + 1]]
                .iter()
                .fold(0u8, |acc, &v| acc ^ bits[v])
                == 0
        })
    }
}

/// Convenience wrapper building a throw-away [`BpDecoder`].
pub fn bp_decode(h: &ParityCheckMatrix, llr: &[f64], max_iters: usize) -> DecodeOutcome {
    BpDecoder::new(h).decode(llr, max_iters)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ldpc::{build_regular_ldpc, to_generator, CodeRate, DEFAULT_MAX_ITERS};
    use crate::math::RngStream;

    fn strong_llr(cw: &[u8]) -> Vec<f64> {
        cw.iter().map(|&b| 20.0 * (1.0 - 2.0 * b as f64)).collect()
    }

    #[test]
    fn valid_codeword_converges_in_one_iteration() {
        let h = build_regular_ldpc(96, CodeRate::Half, 3, &mut RngStream::new(1, 0)).unwrap();
        let (g, _) = to_generator(&h);
        let dec = BpDecoder::new(&h);
        let mut rng = RngStream::new(2, 0);
        for _ in 0..50 {
            let info: Vec<u8> = (0..g.k()).map(|_| rng.below(2) as u8).collect();
            let cw = g.encode(&info).unwrap();
            let out = dec.decode(&strong_llr(&cw), DEFAULT_MAX_ITERS);
            assert!(out.converged);
            assert_eq!(out.iters_used, 1);
            assert_eq!(out.bits, cw);
        }
    }

    #[test]
    fn every_single_flip_is_corrected() {
        let h = build_regular_ldpc(96, CodeRate::Half, 3, &mut RngStream::new(3, 0)).unwrap();
        let (g, _) = to_generator(&h);
        let dec = BpDecoder::new(&h);
        let mut rng = RngStream::new(4, 0);
        let info: Vec<u8> = (0..g.k()).map(|_| rng.below(2) as u8).collect();
        let cw = g.encode(&info).unwrap();
        for j in 0..h.n() {
            let mut llr = strong_llr(&cw);
            llr[j] = -llr[j];
            let out = dec.decode(&llr, DEFAULT_MAX_ITERS);
            assert!(out.converged, "flip at {j}");
            assert_eq!(out.bits, cw, "flip at {j}");
        }
    }

    #[test]
    fn zero_information_does_not_converge() {
        let h = build_regular_ldpc(96, CodeRate::Half, 3, &mut RngStream::new(1, 0)).unwrap();
        let out = bp_decode(&h, &vec![0.0; 96], 10);
        assert!(!out.converged);
        assert_eq!(out.iters_used, 10);
    }
}
