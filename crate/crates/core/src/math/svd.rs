use super::{dot, norm, RealMatrix, RngStream};
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 80;
const ORTHO_TOL: f64 = 1e-15;
/// column norm, relative to `‖A‖_F`, below which a column is zero
const ZERO_COLUMN_REL: f64 = 1e-14;

/// Thin SVD `m = U · diag(s) · Vᵀ` with `k = min(rows, cols)` singular triplets.
#[derive(Debug, Clone)]
pub struct Svd {
    /// rows × k, orthonormal columns
    pub u: RealMatrix,
    /// non-negative, non-increasing
    pub s: Vec<f64>,
    /// cols × k, orthonormal columns
    pub v: RealMatrix,
}

impl Svd {
    pub fn reconstruct(&self) -> RealMatrix {
        let (rows, cols, k) = (self.u.rows(), self.v.rows(), self.s.len());
        RealMatrix::from_fn(rows, cols, |r, c| {
            (0..k).map(|j| self.u[(r, j)] * self.s[j] * self.v[(c, j)]).sum()
        })
    }
}

/// One-sided (Hestenes) Jacobi SVD.
///
/// Columns of the working copy are rotated pairwise until mutually
/// orthogonal; their norms are the singular values and the accumulated
/// rotations form `V`. Wide matrices are handled through their transpose.
pub fn svd(m: &RealMatrix) -> Result<Svd> {
    if m.rows() >= m.cols() {
        jacobi_tall(m)
    } else {
        let t = jacobi_tall(&m.transpose())?;
        Ok(Svd {
            u: t.v,
            s: t.s,
            v: t.u,
        })
    }
}

fn jacobi_tall(a: &RealMatrix) -> Result<Svd> {
    let (rows, cols) = (a.rows(), a.cols());
    // column-major working copies
    let mut w: Vec<Vec<f64>> = (0..cols).map(|c| a.column(c)).collect();
    let mut v: Vec<Vec<f64>> = (0..cols)
        .map(|c| {
            let mut e = vec![0.0; cols];
            e[c] = 1.0;
            e
        })
        .collect();

    // columns driven to rounding noise count as zero; their relative
    // orthogonality never settles
    let floor = (ZERO_COLUMN_REL * a.frobenius_norm()).powi(2);
    let mut converged = cols < 2;
    let mut off = 0.0;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        off = 0.0_f64;
        for p in 0..cols {
            for q in (p + 1)..cols {
                let alpha = dot(&w[p], &w[p]);
                let beta = dot(&w[q], &w[q]);
                let gamma = dot(&w[p], &w[q]);
                if alpha <= floor || beta <= floor {
                    continue;
                }
                let rel = gamma.abs() / (alpha * beta).sqrt();
                off = off.max(rel);
                if rel <= ORTHO_TOL {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut w, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Convergence {
            iters: MAX_SWEEPS,
            residual: off,
        });
    }

    let mut order: Vec<(f64, usize)> = w.iter().enumerate().map(|(j, c)| (norm(c), j)).collect();
    order.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));

    let sigma_max = order.first().map_or(0.0, |o| o.0);
    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(cols);
    let mut v_cols: Vec<Vec<f64>> = Vec::with_capacity(cols);
    let mut s = Vec::with_capacity(cols);
    let mut pending = Vec::new();
    for &(sigma, j) in &order {
        v_cols.push(v[j].clone());
        if sigma * sigma > floor && sigma > sigma_max * 1e-300 {
            u_cols.push(w[j].iter().map(|x| x / sigma).collect());
            s.push(sigma);
        } else {
            pending.push(u_cols.len());
            u_cols.push(Vec::new());
            s.push(0.0);
        }
    }
    // zero singular values: complete U to an orthonormal set
    let mut probe = 0;
    for slot in pending {
        loop {
            let mut cand = vec![0.0; rows];
            cand[probe % rows] = 1.0;
            probe += 1;
            orthogonalize(&mut cand, &u_cols);
            let nrm = norm(&cand);
            if nrm > 1e-8 {
                cand.iter_mut().for_each(|x| *x /= nrm);
                u_cols[slot] = cand;
                break;
            }
            if probe > 4 * rows {
                // fall back on a random direction; cannot fail for k <= rows
                let mut rng = RngStream::new(0x5eed, probe as u64);
                let mut cand: Vec<f64> = (0..rows).map(|_| rng.normal()).collect();
                orthogonalize(&mut cand, &u_cols);
                let nrm = norm(&cand);
                cand.iter_mut().for_each(|x| *x /= nrm);
                u_cols[slot] = cand;
                break;
            }
        }
    }

    let u = RealMatrix::from_fn(rows, cols, |r, c| u_cols[c][r]);
    let vm = RealMatrix::from_fn(cols, cols, |r, c| v_cols[c][r]);
    Ok(Svd { u, s, v: vm })
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (lo, hi) = cols.split_at_mut(q);
    let (cp, cq) = (&mut lo[p], &mut hi[0]);
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (a, b) = (*x, *y);
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}

fn orthogonalize(cand: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for b in basis.iter().filter(|b| !b.is_empty()) {
            let proj = dot(cand, b);
            cand.iter_mut().zip(b).for_each(|(x, y)| *x -= proj * y);
        }
    }
}

/// Largest singular value by power iteration on `mᵀm`, to relative `tol`.
pub fn spectral_norm(m: &RealMatrix, tol: f64) -> f64 {
    if m.data().iter().all(|&x| x == 0.0) || m.cols() == 0 || m.rows() == 0 {
        return 0.0;
    }
    let mut rng = RngStream::new(0x00c0_ffee, m.cols() as u64);
    let mut v: Vec<f64> = (0..m.cols()).map(|_| 1.0 + 0.1 * rng.normal()).collect();
    let n0 = norm(&v);
    v.iter_mut().for_each(|x| *x /= n0);

    let mut est = 0.0;
    let mut stall = 0;
    for _ in 0..20_000 {
        let mv = m.mul_vec(&v);
        let next_est = norm(&mv);
        if next_est == 0.0 {
            // start vector landed in the null space; perturb
            v = (0..m.cols()).map(|_| rng.normal()).collect();
            let n = norm(&v);
            v.iter_mut().for_each(|x| *x /= n);
            continue;
        }
        let mut w = m.tr_mul_vec(&mv);
        let nw = norm(&w);
        w.iter_mut().for_each(|x| *x /= nw);
        v = w;
        if (next_est - est).abs() <= 1e-3 * tol * next_est {
            stall += 1;
            if stall >= 3 {
                return next_est;
            }
        } else {
            stall = 0;
        }
        est = next_est;
    }
    est
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_matrix(rng: &mut RngStream, rows: usize, cols: usize) -> RealMatrix {
        RealMatrix::from_fn(rows, cols, |_, _| rng.normal())
    }

    fn assert_orthonormal_columns(m: &RealMatrix, tol: f64) {
        for a in 0..m.cols() {
            for b in 0..m.cols() {
                let d = dot(&m.column(a), &m.column(b));
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((d - want).abs() < tol, "col {a}·{b} = {d}");
            }
        }
    }

    fn check(m: &RealMatrix) {
        let d = svd(m).unwrap();
        let resid = d.reconstruct().sub(m).unwrap().frobenius_norm();
        assert!(resid <= 1e-8 * m.frobenius_norm().max(1e-300), "residual {resid}");
        assert!(d.s.windows(2).all(|w| w[0] >= w[1]));
        assert!(d.s.iter().all(|&s| s >= 0.0));
        assert_orthonormal_columns(&d.u, 1e-9);
        assert_orthonormal_columns(&d.v, 1e-9);
    }

    #[test]
    fn identity_has_unit_singular_values() {
        let d = svd(&RealMatrix::identity(3)).unwrap();
        assert_eq!(d.s, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn diagonal_keeps_order_and_axes() {
        let d = svd(&RealMatrix::diag(&[3.0, 2.0, 1.0])).unwrap();
        assert_eq!(d.s, vec![3.0, 2.0, 1.0]);
        for i in 0..3 {
            assert_eq!(d.u[(i, i)].abs(), 1.0);
            assert_eq!(d.v[(i, i)].abs(), 1.0);
        }
    }

    #[test]
    fn random_6x4_reconstructs() {
        let mut rng = RngStream::new(11, 0);
        check(&random_matrix(&mut rng, 6, 4));
        check(&random_matrix(&mut rng, 4, 6));
    }

    #[test]
    fn rank_deficient_completes_basis() {
        // rank 1
        let m = RealMatrix::from_fn(5, 3, |r, c| (r + 1) as f64 * (c as f64 - 1.0));
        let d = svd(&m).unwrap();
        assert!(d.s[1] < 1e-12 && d.s[2] < 1e-12);
        check(&m);
        check(&RealMatrix::zeros(3, 2));
    }

    #[test]
    fn thousand_random_matrices_up_to_64() {
        let mut rng = RngStream::new(2024, 1);
        for _ in 0..1000 {
            let r = 1 + rng.below(64);
            let c = 1 + rng.below(64);
            check(&random_matrix(&mut rng, r, c));
        }
    }

    #[test]
    fn spectral_norm_cases() {
        assert!((spectral_norm(&RealMatrix::diag(&[5.0, 1.0]), 1e-10) - 5.0).abs() < 1e-9);
        assert_eq!(spectral_norm(&RealMatrix::zeros(2, 2), 1e-10), 0.0);
        let mut rng = RngStream::new(5, 5);
        for _ in 0..50 {
            let m = random_matrix(&mut rng, 8, 8);
            let tol = 1e-9;
            let s = spectral_norm(&m, tol);
            let top = svd(&m).unwrap().s[0];
            assert!((s - top).abs() <= tol * top, "{s} vs {top}");
        }
    }
}
