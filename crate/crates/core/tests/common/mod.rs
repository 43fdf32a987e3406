//! Oracles shared by the integration tests. Nothing here calls into the
//! solver paths it is used to check.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rnmf_core::DenseMatrix;

pub fn to_na(m: &DenseMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

/// Exhaustive active-set solution of
/// `min_{h >= 0} (1/2) sum_i d_i (v_i - (W h)_i)^2`.
///
/// Enumerates every support set, solves the unconstrained weighted least
/// squares on it, and keeps the feasible candidate with the lowest objective.
pub fn active_set_oracle(w: &DenseMatrix, d: &[f64], v: &[f64]) -> (Vec<f64>, f64) {
    let (m, r) = w.shape();
    let wn = to_na(w);
    let dn = DVector::from_column_slice(d);
    let vn = DVector::from_column_slice(v);
    let objective = |h: &DVector<f64>| {
        let res = &vn - &wn * h;
        0.5 * res
            .iter()
            .zip(dn.iter())
            .map(|(e, d)| d * e * e)
            .sum::<f64>()
    };
    let mut best = DVector::zeros(r);
    let mut best_f = objective(&best);
    for mask in 1u32..(1 << r) {
        let support: Vec<usize> = (0..r).filter(|k| mask & (1 << k) != 0).collect();
        let ws = DMatrix::from_fn(m, support.len(), |i, c| wn[(i, support[c])]);
        let gram = ws.transpose() * DMatrix::from_diagonal(&dn) * &ws;
        let rhs = ws.transpose() * DMatrix::from_diagonal(&dn) * &vn;
        let Some(sol) = gram.clone().lu().solve(&rhs) else {
            continue;
        };
        // reject numerically singular faces
        if (&gram * &sol - &rhs).norm() > 1e-9 * rhs.norm().max(1.0) {
            continue;
        }
        if sol.iter().any(|&x| x < 0.0) {
            continue;
        }
        let mut h = DVector::zeros(r);
        for (c, &k) in support.iter().enumerate() {
            h[k] = sol[c];
        }
        let f = objective(&h);
        if f < best_f {
            best_f = f;
            best = h;
        }
    }
    (best.iter().copied().collect(), best_f)
}

/// Singular values by nalgebra's SVD, largest first.
pub fn singular_values(m: &DenseMatrix) -> Vec<f64> {
    let mut s: Vec<f64> = to_na(m).singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Cauchy(0, scale) draws from an independent sampler.
pub fn cauchy_samples(seed: u64, n: usize, scale: f64) -> Vec<f64> {
    use rand::SeedableRng;
    use rand_distr::{Cauchy, Distribution};
    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
    let dist = Cauchy::new(0.0, scale).unwrap();
    (0..n).map(|_| dist.sample(&mut rng)).collect()
}

/// Angle in degrees between two 2-vectors, ignoring sign.
pub fn angle_deg(a: (f64, f64), b: (f64, f64)) -> f64 {
    let dot = a.0 * b.0 + a.1 * b.1;
    let na = (a.0 * a.0 + a.1 * a.1).sqrt();
    let nb = (b.0 * b.0 + b.1 * b.1).sqrt();
    (dot.abs() / (na * nb)).min(1.0).acos().to_degrees()
}
