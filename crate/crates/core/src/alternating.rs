//! Alternating reweighted non-negative least squares.
//!
//! Each outer iteration refreshes the entry weights from the residual, solves
//! every column of `H` as a weighted NNLS problem, refreshes the weights
//! again, then solves every row of `W` the same way on the transposed
//! problem. The reweighting rule is supplied by the caller.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::rng::Rng;
use crate::wnls::{solve_wnls_with, OgmOptions, WnlsProblem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIter,
}

/// One outer iteration, with both objective values measured under the
/// parameters (scale, truncation, cutoffs) chosen at the start of that
/// iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Objective at the iterate the step started from.
    pub objective_start: f64,
    /// Objective after the `H` and `W` updates.
    pub objective: f64,
    pub gamma: Option<f64>,
    pub n_outliers: usize,
    pub inner_iterations: usize,
}

pub(crate) trait Reweighting {
    /// Chooses this iteration's parameters from the current residual.
    fn begin_iteration(&mut self, iteration: usize, residual: &DenseMatrix) -> Result<()>;
    fn weights(&self, residual: &DenseMatrix) -> DenseMatrix;
    fn objective(&self, residual: &DenseMatrix) -> f64;
    fn gamma(&self) -> Option<f64> {
        None
    }
    fn count_outliers(&self, _residual: &DenseMatrix) -> usize {
        0
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct EngineConfig {
    pub rank: usize,
    pub inner: OgmOptions,
    pub eps2: f64,
    pub max_outer: usize,
    pub seed: u64,
}

pub(crate) struct EngineOutput {
    pub w: DenseMatrix,
    pub h: DenseMatrix,
    pub residual: DenseMatrix,
    pub records: Vec<IterationRecord>,
    pub termination: Termination,
}

pub(crate) fn validate_input(v: &DenseMatrix, rank: usize) -> Result<()> {
    if let Some((row, col, value)) = v.find_negative() {
        return Err(Error::NegativeEntry { row, col, value });
    }
    let (m, n) = v.shape();
    if rank == 0 || rank > m.min(n) {
        return Err(Error::InvalidConfig(format!(
            "rank must be in 1..={} for a {m}x{n} matrix, got {rank}",
            m.min(n)
        )));
    }
    Ok(())
}

pub(crate) fn validate_tolerances(eps1: f64, eps2: f64) -> Result<()> {
    if !(eps1 > 0.0) || !(eps2 > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "eps1 and eps2 must be positive, got {eps1} and {eps2}"
        )));
    }
    Ok(())
}

/// Seeded uniform start scaled by `sqrt(mean(V) / r)`, `W` drawn before `H`.
pub fn initialize(v: &DenseMatrix, rank: usize, seed: u64) -> (DenseMatrix, DenseMatrix) {
    let (m, n) = v.shape();
    let scale = (v.mean() / rank as f64).sqrt();
    let mut rng = Rng::new(seed);
    let w = DenseMatrix::from_fn(m, rank, |_, _| scale * rng.uniform());
    let h = DenseMatrix::from_fn(rank, n, |_, _| scale * rng.uniform());
    (w, h)
}

pub(crate) fn residual(v: &DenseMatrix, w: &DenseMatrix, h: &DenseMatrix) -> Result<DenseMatrix> {
    v.sub(&w.matmul(h)?)
}

/// Solves every row of `start` (one row per subproblem) against `basis`.
///
/// Row `k` of the result minimizes `sum_i weights[k, i] (targets[k, i] -
/// (basis x)_i)^2`. Rows are independent and solved in parallel; each
/// solve is sequential, so the result does not depend on the thread count.
fn solve_rows(
    basis: &DenseMatrix,
    weights: &DenseMatrix,
    targets: &DenseMatrix,
    start: &DenseMatrix,
    opts: &OgmOptions,
) -> Result<(DenseMatrix, usize)> {
    let solved: Vec<(Vec<f64>, usize)> = (0..start.rows())
        .into_par_iter()
        .map(|k| {
            let p = WnlsProblem::new(basis, weights.row(k), targets.row(k), start.row(k))?;
            let (x, trace) = solve_wnls_with(&p, opts)?;
            Ok((x, trace.iterations))
        })
        .collect::<Result<_>>()?;
    let inner = solved.iter().map(|(_, it)| it).sum();
    let data = solved.into_iter().flat_map(|(x, _)| x).collect();
    Ok((DenseMatrix::new(start.rows(), start.cols(), data)?, inner))
}

pub(crate) fn run(
    v: &DenseMatrix,
    cfg: &EngineConfig,
    rule: &mut dyn Reweighting,
) -> Result<EngineOutput> {
    let (mut w, h0) = initialize(v, cfg.rank, cfg.seed);
    // H is kept transposed (n x r) so each column subproblem is a row.
    let mut ht = h0.transpose();
    let vt = v.transpose();
    let mut e = residual(v, &w, &h0)?;
    let e_init = e.clone();
    let mut records = Vec::new();
    let mut termination = Termination::MaxIter;

    for t in 0..cfg.max_outer {
        rule.begin_iteration(t, &e)?;
        let objective_start = rule.objective(&e);

        let q = rule.weights(&e);
        let (new_ht, inner_h) = solve_rows(&w, &q.transpose(), &vt, &ht, &cfg.inner)?;
        ht = new_ht;
        let h = ht.transpose();

        e = residual(v, &w, &h)?;
        let q = rule.weights(&e);
        let (new_w, inner_w) = solve_rows(&ht, &q, v, &w, &cfg.inner)?;
        w = new_w;

        e = residual(v, &w, &h)?;
        let objective = rule.objective(&e);
        records.push(IterationRecord {
            iteration: t,
            objective_start,
            objective,
            gamma: rule.gamma(),
            n_outliers: rule.count_outliers(&e),
            inner_iterations: inner_h + inner_w,
        });

        // Relative-progress rule, with the previous iterate standing in for
        // the unknown minimizer. Skipped on the first iteration.
        if t > 0 {
            let change = (objective_start - objective).abs();
            let progress = (rule.objective(&e_init) - objective).abs();
            if change <= cfg.eps2 * progress {
                termination = Termination::Converged;
                break;
            }
        }
    }

    Ok(EngineOutput {
        w,
        h: ht.transpose(),
        residual: e,
        records,
        termination,
    })
}

/// Median of a sample (mean of the two middle values for even sizes).
pub(crate) fn median(mut xs: Vec<f64>) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.sort_unstable_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

pub(crate) fn abs_values(m: &DenseMatrix) -> Vec<f64> {
    m.as_slice().iter().map(|x| x.abs()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_odd_even() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(median(vec![]), 0.0);
    }

    #[test]
    fn init_is_seeded_and_nonneg() {
        let v = DenseMatrix::filled(5, 4, 2.0);
        let (w1, h1) = initialize(&v, 2, 9);
        let (w2, h2) = initialize(&v, 2, 9);
        assert_eq!(w1, w2);
        assert_eq!(h1, h2);
        assert!(w1.as_slice().iter().chain(h1.as_slice()).all(|&x| x >= 0.0));
        let bound = (2.0f64 / 2.0).sqrt();
        assert!(w1.as_slice().iter().all(|&x| x < bound));
    }

    #[test]
    fn rejects_bad_rank_and_negative_input() {
        let v = DenseMatrix::filled(3, 4, 1.0);
        assert!(validate_input(&v, 0).is_err());
        assert!(validate_input(&v, 4).is_err());
        assert!(validate_input(&v, 3).is_ok());
        let mut neg = v.clone();
        neg.set(1, 2, -0.5);
        assert!(matches!(
            validate_input(&neg, 1),
            Err(Error::NegativeEntry { row: 1, col: 2, .. })
        ));
    }
}
