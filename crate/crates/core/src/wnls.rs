//! Weighted non-negative least squares by Nesterov's optimal gradient method.
//!
//! One subproblem is `min_{h >= 0} (1/2) sum_i d_i (v_i - (W h)_i)^2` for a
//! single column of `H` (or, transposed, a single row of `W`). The solver
//! works on the `r x r` Gram form `A = W^T D W`, `b = W^T D v`, so each
//! iteration costs `O(r^2)` after an `O(m r^2)` setup.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{dot, power_iteration, project_scalar, symv, DenseMatrix};
use crate::matrix::{POWER_MAX_ITER, POWER_TOL};

/// Floor on the relative projected-gradient tolerance.
pub const RELATIVE_FLOOR: f64 = 1e-3;
pub const DEFAULT_EPS1: f64 = 1e-6;
pub const DEFAULT_MAX_ITER: usize = 500;

#[derive(Debug, Clone, Copy)]
pub struct WnlsProblem<'a> {
    /// `m x r` design, fixed during the solve.
    pub basis: &'a DenseMatrix,
    /// Per-row weights, the diagonal of `D`.
    pub weights: &'a [f64],
    pub target: &'a [f64],
    /// Warm start, length `r`.
    pub start: &'a [f64],
}

impl<'a> WnlsProblem<'a> {
    pub fn new(
        basis: &'a DenseMatrix,
        weights: &'a [f64],
        target: &'a [f64],
        start: &'a [f64],
    ) -> Result<Self> {
        let (m, r) = basis.shape();
        check_len("weights", m, weights.len())?;
        check_len("target", m, target.len())?;
        check_len("start", r, start.len())?;
        if let Some(&d) = weights.iter().find(|d| !(**d >= 0.0 && d.is_finite())) {
            return Err(Error::NegativeArgument {
                what: "weight",
                value: d,
            });
        }
        if let Some(&x) = start.iter().find(|x| **x < 0.0) {
            return Err(Error::NegativeArgument {
                what: "warm start",
                value: x,
            });
        }
        Ok(WnlsProblem {
            basis,
            weights,
            target,
            start,
        })
    }

    pub fn rank(&self) -> usize {
        self.basis.cols()
    }

    /// `(1/2) sum_i d_i (v_i - (W h)_i)^2`, evaluated directly.
    pub fn objective(&self, h: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.basis.rows() {
            let r = self.target[i] - dot(self.basis.row(i), h);
            acc += self.weights[i] * r * r;
        }
        0.5 * acc
    }
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::LengthMismatch {
            what,
            expected,
            got,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OgmTrace {
    pub iterations: usize,
    pub initial_pg_norm: f64,
    pub final_pg_norm: f64,
    /// Largest eigenvalue of `W^T D W`.
    pub lipschitz: f64,
    pub converged: bool,
    /// All weights were zero; the warm start was returned untouched.
    pub skipped: bool,
}

/// `W^T D W z - W^T D v`, computed from the residual so that exact fits
/// give an exact zero.
pub fn wnls_gradient(p: &WnlsProblem<'_>, z: &[f64]) -> Result<Vec<f64>> {
    let r = p.rank();
    check_len("z", r, z.len())?;
    let mut grad = vec![0.0; r];
    for i in 0..p.basis.rows() {
        let d = p.weights[i];
        if d == 0.0 {
            continue;
        }
        let row = p.basis.row(i);
        let scaled = d * (dot(row, z) - p.target[i]);
        for (g, &w) in grad.iter_mut().zip(row) {
            *g += scaled * w;
        }
    }
    Ok(grad)
}

/// Projected gradient: the raw gradient where `h_l > 0`, `min(0, grad_l)`
/// where `h_l = 0`.
pub fn projected_gradient(p: &WnlsProblem<'_>, h: &[f64]) -> Result<Vec<f64>> {
    if let Some(&x) = h.iter().find(|x| **x < 0.0) {
        return Err(Error::NegativeArgument {
            what: "h",
            value: x,
        });
    }
    let grad = wnls_gradient(p, h)?;
    Ok(project_gradient(h, &grad))
}

fn project_gradient(h: &[f64], grad: &[f64]) -> Vec<f64> {
    h.iter()
        .zip(grad)
        .map(|(&x, &g)| if x > 0.0 { g } else { g.min(0.0) })
        .collect()
}

fn projected_norm(h: &[f64], grad: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (&x, &g) in h.iter().zip(grad) {
        let pg = if x > 0.0 { g } else { g.min(0.0) };
        acc += pg * pg;
    }
    acc.sqrt()
}

/// Momentum update `(1 + sqrt(4 a^2 + 1)) / 2`.
#[inline]
pub fn momentum_step(alpha: f64) -> f64 {
    (1.0 + (4.0 * alpha * alpha + 1.0).sqrt()) / 2.0
}

struct Gram {
    a: Vec<f64>,
    b: Vec<f64>,
    r: usize,
}

impl Gram {
    fn build(p: &WnlsProblem<'_>) -> Self {
        let r = p.rank();
        let mut a = vec![0.0; r * r];
        let mut b = vec![0.0; r];
        for i in 0..p.basis.rows() {
            let d = p.weights[i];
            if d == 0.0 {
                continue;
            }
            let row = p.basis.row(i);
            let dv = d * p.target[i];
            for k in 0..r {
                let dwk = d * row[k];
                if dwk == 0.0 {
                    continue;
                }
                b[k] += dv * row[k];
                for l in k..r {
                    a[k * r + l] += dwk * row[l];
                }
            }
        }
        for k in 0..r {
            for l in 0..k {
                a[k * r + l] = a[l * r + k];
            }
        }
        Gram { a, b, r }
    }

    fn gradient(&self, z: &[f64], out: &mut [f64]) {
        symv(&self.a, self.r, z, out);
        for (g, &b) in out.iter_mut().zip(&self.b) {
            *g -= b;
        }
    }

    /// Objective up to the constant `(1/2) v^T D v`.
    fn reduced_objective(&self, h: &[f64], scratch: &mut [f64]) -> f64 {
        symv(&self.a, self.r, h, scratch);
        0.5 * dot(h, scratch) - dot(&self.b, h)
    }
}

/// Stopping controls for [`solve_wnls_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OgmOptions {
    pub eps1: f64,
    pub max_iter: usize,
    /// Lower bound on the relative tolerance; the effective tolerance is
    /// `max(eps1, relative_floor)`. Zero disables the floor.
    pub relative_floor: f64,
}

impl Default for OgmOptions {
    fn default() -> Self {
        OgmOptions {
            eps1: DEFAULT_EPS1,
            max_iter: DEFAULT_MAX_ITER,
            relative_floor: RELATIVE_FLOOR,
        }
    }
}

/// Runs the optimal gradient method from `p.start`.
///
/// Stops when `||PG(h_k)|| <= max(eps1, 1e-3) * ||PG(h_0)||` or after
/// `max_iter` iterations. The returned point is the last projected iterate,
/// and never has a larger objective than the warm start.
pub fn solve_wnls(p: &WnlsProblem<'_>, eps1: f64, max_iter: usize) -> Result<(Vec<f64>, OgmTrace)> {
    solve_wnls_with(
        p,
        &OgmOptions {
            eps1,
            max_iter,
            relative_floor: RELATIVE_FLOOR,
        },
    )
}

/// [`solve_wnls`] with an explicit tolerance floor.
pub fn solve_wnls_with(p: &WnlsProblem<'_>, opts: &OgmOptions) -> Result<(Vec<f64>, OgmTrace)> {
    let OgmOptions {
        eps1,
        max_iter,
        relative_floor,
    } = *opts;
    if !(eps1 > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "eps1 must be positive, got {eps1}"
        )));
    }
    let r = p.rank();
    let gram = Gram::build(p);
    let lipschitz = power_iteration(&gram.a, r, POWER_TOL, POWER_MAX_ITER);
    let h0 = p.start.to_vec();

    let mut grad = vec![0.0; r];
    gram.gradient(&h0, &mut grad);
    let initial_pg_norm = projected_norm(&h0, &grad);
    let mut trace = OgmTrace {
        iterations: 0,
        initial_pg_norm,
        final_pg_norm: initial_pg_norm,
        lipschitz,
        converged: false,
        skipped: false,
    };
    if lipschitz == 0.0 {
        trace.skipped = true;
        return Ok((h0, trace));
    }
    if initial_pg_norm == 0.0 {
        trace.converged = true;
        return Ok((h0, trace));
    }

    let tol = eps1.max(relative_floor) * initial_pg_norm;
    let step = 1.0 / lipschitz;
    let mut z = h0.clone();
    let mut h_prev = h0.clone();
    let mut h = vec![0.0; r];
    let mut alpha = 1.0;
    for k in 0..max_iter {
        gram.gradient(&z, &mut grad);
        for l in 0..r {
            h[l] = project_scalar(z[l] - step * grad[l]);
        }
        let alpha_next = momentum_step(alpha);
        let beta = (alpha - 1.0) / alpha_next;
        for l in 0..r {
            z[l] = h[l] + beta * (h[l] - h_prev[l]);
        }
        alpha = alpha_next;
        h_prev.copy_from_slice(&h);

        gram.gradient(&h, &mut grad);
        trace.iterations = k + 1;
        trace.final_pg_norm = projected_norm(&h, &grad);
        if trace.final_pg_norm <= tol {
            trace.converged = true;
            break;
        }
    }
    if trace.iterations == 0 {
        return Ok((h0, trace));
    }

    let mut scratch = vec![0.0; r];
    if gram.reduced_objective(&h, &mut scratch) > gram.reduced_objective(&h0, &mut scratch) {
        return Ok((h0, trace));
    }
    Ok((h, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn col(rows: &[f64]) -> DenseMatrix {
        DenseMatrix::new(rows.len(), 1, rows.to_vec()).unwrap()
    }

    #[test]
    fn gradient_examples() {
        let w = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![0.5, 1.0], vec![3.0, 0.0]]).unwrap();
        let z = [0.7, 1.3];
        let v: Vec<f64> = (0..3).map(|i| dot(w.row(i), &z)).collect();
        let d = [1.0, 2.0, 0.5];
        let p = WnlsProblem::new(&w, &d, &v, &[0.0, 0.0]).unwrap();
        assert_eq!(wnls_gradient(&p, &z).unwrap(), vec![0.0, 0.0]);

        let zeros = [0.0; 3];
        let p = WnlsProblem::new(&w, &zeros, &v, &[0.0, 0.0]).unwrap();
        assert_eq!(wnls_gradient(&p, &[5.0, -2.0]).unwrap(), vec![0.0, 0.0]);

        let w = col(&[1.0, 1.0]);
        let p = WnlsProblem::new(&w, &[1.0, 0.0], &[2.0, 5.0], &[0.0]).unwrap();
        assert_eq!(wnls_gradient(&p, &[0.0]).unwrap(), vec![-2.0]);
        assert!(wnls_gradient(&p, &[0.0, 1.0]).is_err());
    }

    #[test]
    fn projected_gradient_examples() {
        let w = DenseMatrix::identity(2);
        let v = [3.0, -1.0];
        let d = [1.0, 1.0];
        let p = WnlsProblem::new(&w, &d, &v, &[0.0, 0.0]).unwrap();
        // interior: h - v
        assert_eq!(
            projected_gradient(&p, &[1.0, 2.0]).unwrap(),
            vec![-2.0, 3.0]
        );
        // h_1 = 0 with grad 1 clamps to 0, h_0 = 0 with grad -3 survives
        assert_eq!(
            projected_gradient(&p, &[0.0, 0.0]).unwrap(),
            vec![-3.0, 0.0]
        );
        assert!(projected_gradient(&p, &[-1.0, 0.0]).is_err());
    }

    #[test]
    fn solve_examples() {
        let w = DenseMatrix::identity(3);
        let v = [2.0, -1.0, 0.5];
        let d = [1.0; 3];
        let p = WnlsProblem::new(&w, &d, &v, &[1.0, 1.0, 1.0]).unwrap();
        let (h, trace) = solve_wnls(&p, 1e-6, 500).unwrap();
        assert!(trace.converged);
        for (a, b) in h.iter().zip([2.0, 0.0, 0.5]) {
            assert!((a - b).abs() < 1e-12, "{h:?}");
        }

        let w = col(&[1.0, 1.0]);
        let p = WnlsProblem::new(&w, &[1.0, 0.0], &[2.0, 5.0], &[0.0]).unwrap();
        let (h, _) = solve_wnls(&p, 1e-6, 500).unwrap();
        assert!((h[0] - 2.0).abs() < 1e-12);

        assert!((momentum_step(1.0) - (1.0 + 5f64.sqrt()) / 2.0).abs() < 1e-15);
        assert!((momentum_step(1.0) - 1.6180).abs() < 1e-4);
    }

    #[test]
    fn all_zero_weights_keep_warm_start() {
        let w = DenseMatrix::from_fn(4, 2, |i, j| (i + j) as f64);
        let start = [0.3, 0.9];
        let p = WnlsProblem::new(&w, &[0.0; 4], &[1.0; 4], &start).unwrap();
        let (h, trace) = solve_wnls(&p, 1e-6, 100).unwrap();
        assert_eq!(h, start.to_vec());
        assert!(trace.skipped);
    }

    #[test]
    fn rejects_bad_inputs() {
        let w = DenseMatrix::identity(2);
        assert!(WnlsProblem::new(&w, &[1.0], &[1.0, 1.0], &[0.0, 0.0]).is_err());
        assert!(WnlsProblem::new(&w, &[1.0, -1.0], &[1.0, 1.0], &[0.0, 0.0]).is_err());
        assert!(WnlsProblem::new(&w, &[1.0, 1.0], &[1.0, 1.0], &[-1.0, 0.0]).is_err());
        let p = WnlsProblem::new(&w, &[1.0, 1.0], &[1.0, 1.0], &[0.0, 0.0]).unwrap();
        assert!(solve_wnls(&p, 0.0, 10).is_err());
    }

    struct Instance {
        w: DenseMatrix,
        d: Vec<f64>,
        v: Vec<f64>,
        h0: Vec<f64>,
    }

    fn instance(rng: &mut Rng, m: usize, r: usize) -> Instance {
        Instance {
            w: DenseMatrix::from_fn(m, r, |_, _| rng.uniform()),
            d: (0..m).map(|_| rng.uniform_range(0.05, 1.0)).collect(),
            v: (0..m).map(|_| rng.uniform_range(-0.5, 2.0)).collect(),
            h0: (0..r).map(|_| rng.uniform()).collect(),
        }
    }

    #[test]
    fn objective_never_exceeds_warm_start() {
        let mut rng = Rng::new(21);
        for _ in 0..200 {
            let m = 2 + rng.below(10);
            let r = 1 + rng.below(5);
            let inst = instance(&mut rng, m, r);
            let p = WnlsProblem::new(&inst.w, &inst.d, &inst.v, &inst.h0).unwrap();
            let (h, _) = solve_wnls(&p, 1e-6, 7).unwrap();
            let (f, f0) = (p.objective(&h), p.objective(&inst.h0));
            assert!(f <= f0 + 1e-10 * f0.abs().max(1.0), "{f} > {f0}");
            assert!(h.iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = Rng::new(4);
        for _ in 0..30 {
            let inst = instance(&mut rng, 6, 3);
            let p = WnlsProblem::new(&inst.w, &inst.d, &inst.v, &inst.h0).unwrap();
            let z: Vec<f64> = (0..3).map(|_| rng.uniform_range(-1.0, 2.0)).collect();
            let grad = wnls_gradient(&p, &z).unwrap();
            let step = 1e-6;
            for l in 0..3 {
                let mut zp = z.clone();
                let mut zm = z.clone();
                zp[l] += step;
                zm[l] -= step;
                let fd = (p.objective(&zp) - p.objective(&zm)) / (2.0 * step);
                let scale = grad[l].abs().max(1e-3);
                assert!((fd - grad[l]).abs() / scale < 1e-5, "{fd} vs {}", grad[l]);
            }
        }
    }

    #[test]
    fn weight_scaling_leaves_solution_unchanged() {
        let mut rng = Rng::new(8);
        for _ in 0..30 {
            let inst = instance(&mut rng, 8, 3);
            let p = WnlsProblem::new(&inst.w, &inst.d, &inst.v, &inst.h0).unwrap();
            let (h, _) = solve_wnls(&p, 1e-6, 500).unwrap();
            let c = rng.uniform_range(0.01, 100.0);
            let scaled: Vec<f64> = inst.d.iter().map(|d| d * c).collect();
            let q = WnlsProblem::new(&inst.w, &scaled, &inst.v, &inst.h0).unwrap();
            let (hs, _) = solve_wnls(&q, 1e-6, 500).unwrap();
            for (a, b) in h.iter().zip(&hs) {
                assert!((a - b).abs() <= 1e-8, "{a} vs {b}");
            }
        }
    }
}
