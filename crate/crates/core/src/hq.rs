//! Truncated Cauchy NMF by half-quadratic alternation.
//!
//! Every outer iteration:
//!
//! 1. computes the residual `E = V - WH`,
//! 2. re-estimates the Cauchy scale `gamma` from `E` (Nagy fixed point),
//! 3. picks the truncation `sigma` (explicit, none, or from a three-sigma
//!    rule on the smaller half of the residual magnitudes) and marks the
//!    entries past it as outliers,
//! 4. weights every entry by `1 / (1 + (E/gamma)^2)`, zero on outliers, and
//!    solves each column of `H` as a weighted NNLS problem,
//! 5. recomputes the weights at the new residual, keeping the same outliers,
//!    and solves each row of `W`.
//!
//! With `gamma`, `sigma` and the outlier set held within an iteration, both
//! solves are majorize-minimize steps on the truncated objective, so the
//! objective never increases inside an iteration.

use serde::{Deserialize, Serialize};

use crate::alternating::{
    self, abs_values, median, EngineConfig, IterationRecord, Reweighting, Termination,
};
use crate::error::{Error, Result};
use crate::losses::{hq_weight_unchecked, Sigma, TruncatedCauchyLoss};
use crate::matrix::DenseMatrix;
use crate::wnls::{OgmOptions, DEFAULT_EPS1, DEFAULT_MAX_ITER, RELATIVE_FLOOR};

pub const DEFAULT_EPS2: f64 = 1e-6;
pub const DEFAULT_MAX_OUTER: usize = 500;
pub const NAGY_TOL: f64 = 1e-6;
pub const NAGY_MAX_ITER: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode", content = "gamma")]
pub enum ScaleMode {
    Nagy,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode", content = "sigma")]
pub enum TruncationMode {
    /// Three-sigma rule on the below-median residual magnitudes.
    RobustStat,
    Explicit(f64),
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub rank: usize,
    pub eps1: f64,
    pub eps2: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    /// Inner solves stop once the projected gradient shrinks by
    /// `max(eps1, inner_floor)`.
    pub inner_floor: f64,
    pub scale: ScaleMode,
    pub truncation: TruncationMode,
    pub seed: u64,
    /// Lower clamp for the scale estimate; `None` resolves to
    /// `1e-4 * median(|V|)`.
    pub gamma_min: Option<f64>,
    /// First outer iteration (counting from 0) at which robust-stat
    /// rejection is active. Iteration 0 works from the random start.
    pub burn_in: usize,
    pub nagy_tol: f64,
    pub nagy_max_iter: usize,
}

impl SolverConfig {
    pub fn new(rank: usize) -> Self {
        SolverConfig {
            rank,
            eps1: DEFAULT_EPS1,
            eps2: DEFAULT_EPS2,
            max_outer: DEFAULT_MAX_OUTER,
            max_inner: DEFAULT_MAX_ITER,
            inner_floor: RELATIVE_FLOOR,
            scale: ScaleMode::Nagy,
            truncation: TruncationMode::RobustStat,
            seed: 0,
            gamma_min: None,
            burn_in: 1,
            nagy_tol: NAGY_TOL,
            nagy_max_iter: NAGY_MAX_ITER,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Copy with `gamma_min` filled in for `v`.
    pub fn resolved(&self, v: &DenseMatrix) -> SolverConfig {
        let mut out = *self;
        out.gamma_min = Some(self.gamma_min.unwrap_or_else(|| default_gamma_min(v)));
        out
    }

    fn validate(&self, v: &DenseMatrix) -> Result<()> {
        alternating::validate_input(v, self.rank)?;
        alternating::validate_tolerances(self.eps1, self.eps2)?;
        if let Some(g) = self.gamma_min {
            if !(g > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "gamma_min must be positive, got {g}"
                )));
            }
        }
        if let ScaleMode::Fixed(g) = self.scale {
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "fixed gamma must be positive, got {g}"
                )));
            }
        }
        if let TruncationMode::Explicit(s) = self.truncation {
            if !(s > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "sigma must be positive, got {s}"
                )));
            }
        }
        Ok(())
    }
}

pub(crate) fn default_gamma_min(v: &DenseMatrix) -> f64 {
    let med = median(abs_values(v));
    let base = if med > 0.0 {
        med
    } else {
        v.as_slice().iter().map(|x| x.abs()).sum::<f64>() / v.len().max(1) as f64
    };
    if base > 0.0 {
        1e-4 * base
    } else {
        1e-12
    }
}

/// Solver state after the last outer iteration.
#[derive(Debug, Clone)]
pub struct HqState {
    pub w: DenseMatrix,
    pub h: DenseMatrix,
    /// `V - WH` at the returned factors.
    pub residual: DenseMatrix,
    /// Entry weights at the returned factors under the final `gamma`, zero
    /// on `outliers`.
    pub weights: DenseMatrix,
    pub gamma: f64,
    /// Effective truncation of the final iteration.
    pub sigma: Sigma,
    /// Entries rejected at the start of the final iteration, row-major.
    pub outliers: Vec<(usize, usize)>,
    /// Objective at the end of each outer iteration.
    pub objective_trace: Vec<f64>,
    pub records: Vec<IterationRecord>,
    pub outer_iter: usize,
    pub termination: Termination,
    pub config: SolverConfig,
}

#[derive(Debug, Clone)]
pub struct Factorization {
    pub w: DenseMatrix,
    pub h: DenseMatrix,
    pub state: HqState,
}

/// `Q_ij = 1 / (1 + (E_ij / gamma)^2)`, forced to zero on `outliers`.
pub fn update_weights(e: &DenseMatrix, gamma: f64, outliers: &[(usize, usize)]) -> DenseMatrix {
    let mut q = DenseMatrix::from_fn(e.rows(), e.cols(), |i, j| {
        let r = e.get(i, j) / gamma;
        1.0 / (1.0 + r * r)
    });
    for &(i, j) in outliers {
        q.set(i, j, 0.0);
    }
    q
}

/// Nagy's fixed point `gamma <- gamma * sqrt(1 / e0 - 1)` with
/// `e0 = mean(1 / (1 + (E / gamma)^2))`, clamped below at `gamma_min`.
pub fn estimate_scale_nagy(
    e: &DenseMatrix,
    gamma0: f64,
    tol: f64,
    max_iter: usize,
    gamma_min: f64,
) -> f64 {
    if e.as_slice().iter().all(|&x| x == 0.0) {
        return gamma_min;
    }
    let n = e.len() as f64;
    let mut gamma = gamma0.max(gamma_min);
    for _ in 0..max_iter {
        let mut acc = 0.0;
        for &x in e.as_slice() {
            let r = x / gamma;
            acc += 1.0 / (1.0 + r * r);
        }
        let e0 = acc / n;
        let next = (gamma * (1.0 / e0 - 1.0).max(0.0).sqrt()).max(gamma_min);
        let done = (next - gamma).abs() <= tol * gamma;
        gamma = next;
        if done || gamma == gamma_min {
            break;
        }
    }
    gamma
}

/// Magnitude threshold `mu + 3 delta` of the below-median residual
/// magnitudes. `None` for an empty residual.
pub fn outlier_threshold(e: &DenseMatrix) -> Option<f64> {
    if e.is_empty() {
        return None;
    }
    let mut mags = abs_values(e);
    mags.sort_unstable_by(f64::total_cmp);
    let lower = &mags[..(mags.len() / 2).max(1)];
    let k = lower.len() as f64;
    let mean = lower.iter().sum::<f64>() / k;
    let var = lower.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / k;
    let delta_floor = 1e-12 + 1e-6 * mean;
    Some(mean + 3.0 * var.sqrt().max(delta_floor))
}

/// Indices (row-major) whose residual magnitude exceeds
/// [`outlier_threshold`].
pub fn detect_outliers(e: &DenseMatrix) -> Vec<(usize, usize)> {
    let Some(threshold) = outlier_threshold(e) else {
        return Vec::new();
    };
    let cols = e.cols();
    e.as_slice()
        .iter()
        .enumerate()
        .filter(|(_, x)| x.abs() > threshold)
        .map(|(p, _)| (p / cols, p % cols))
        .collect()
}

/// Checks `||h|| <= 2 alpha + sigma alpha / (sqrt(2) gamma)` for a
/// coefficient column against unit-norm basis columns.
pub fn lemma1_check(
    w: &DenseMatrix,
    h_col: &[f64],
    sigma: f64,
    gamma: f64,
    alpha: f64,
) -> Result<bool> {
    let off: Vec<usize> = (0..w.cols())
        .filter(|&j| {
            let n: f64 = w.column(j).iter().map(|x| x * x).sum::<f64>().sqrt();
            (n - 1.0).abs() > 1e-9
        })
        .collect();
    if !off.is_empty() {
        return Err(Error::NotNormalized(off));
    }
    Ok(h_norm(h_col) <= lemma1_bound(sigma, gamma, alpha))
}

pub fn lemma1_bound(sigma: f64, gamma: f64, alpha: f64) -> f64 {
    2.0 * alpha + sigma * alpha / (std::f64::consts::SQRT_2 * gamma)
}

fn h_norm(h: &[f64]) -> f64 {
    h.iter().map(|x| x * x).sum::<f64>().sqrt()
}

struct HqRule {
    scale: ScaleMode,
    truncation: TruncationMode,
    gamma_min: f64,
    burn_in: usize,
    nagy_tol: f64,
    nagy_max_iter: usize,
    gamma: f64,
    sigma: Sigma,
    /// Row-major flags of the entries detected past the truncation at the
    /// start of the current iteration.
    rejected: Vec<bool>,
}

impl HqRule {
    fn new(cfg: &SolverConfig) -> Self {
        HqRule {
            scale: cfg.scale,
            truncation: cfg.truncation,
            gamma_min: cfg.gamma_min.expect("resolved config"),
            burn_in: cfg.burn_in,
            nagy_tol: cfg.nagy_tol,
            nagy_max_iter: cfg.nagy_max_iter,
            gamma: 1.0,
            sigma: Sigma::Unbounded,
            rejected: Vec::new(),
        }
    }

    #[inline]
    fn x(&self, e: f64) -> f64 {
        let r = e / self.gamma;
        r * r
    }
}

impl Reweighting for HqRule {
    fn begin_iteration(&mut self, iteration: usize, residual: &DenseMatrix) -> Result<()> {
        match self.scale {
            ScaleMode::Fixed(g) => self.gamma = g,
            ScaleMode::Nagy => {
                if iteration == 0 {
                    self.gamma = median(abs_values(residual)).max(self.gamma_min);
                }
                self.gamma = estimate_scale_nagy(
                    residual,
                    self.gamma,
                    self.nagy_tol,
                    self.nagy_max_iter,
                    self.gamma_min,
                );
            }
        }
        self.sigma = match self.truncation {
            TruncationMode::None => Sigma::Unbounded,
            TruncationMode::Explicit(s) => Sigma::Finite(s),
            TruncationMode::RobustStat if iteration >= self.burn_in => {
                match outlier_threshold(residual) {
                    Some(t) => Sigma::Finite(self.x(t)),
                    None => Sigma::Unbounded,
                }
            }
            TruncationMode::RobustStat => Sigma::Unbounded,
        };
        self.rejected = residual
            .as_slice()
            .iter()
            .map(|&e| !self.sigma.contains(self.x(e)))
            .collect();
        Ok(())
    }

    fn weights(&self, residual: &DenseMatrix) -> DenseMatrix {
        let cols = residual.cols();
        DenseMatrix::from_fn(residual.rows(), cols, |i, j| {
            if self.rejected[i * cols + j] {
                0.0
            } else {
                hq_weight_unchecked(self.x(residual.get(i, j)), Sigma::Unbounded)
            }
        })
    }

    fn objective(&self, residual: &DenseMatrix) -> f64 {
        TruncatedCauchyLoss {
            gamma: self.gamma,
            sigma: self.sigma,
        }
        .objective_from_residual(residual)
    }

    fn gamma(&self) -> Option<f64> {
        Some(self.gamma)
    }

    fn count_outliers(&self, _residual: &DenseMatrix) -> usize {
        self.rejected.iter().filter(|&&r| r).count()
    }
}

/// Truncated Cauchy NMF of a non-negative matrix.
pub fn factorize(v: &DenseMatrix, cfg: &SolverConfig) -> Result<Factorization> {
    cfg.validate(v)?;
    let cfg = cfg.resolved(v);
    let mut rule = HqRule::new(&cfg);
    let engine = EngineConfig {
        rank: cfg.rank,
        inner: OgmOptions {
            eps1: cfg.eps1,
            max_iter: cfg.max_inner,
            relative_floor: cfg.inner_floor,
        },
        eps2: cfg.eps2,
        max_outer: cfg.max_outer,
        seed: cfg.seed,
    };
    let out = alternating::run(v, &engine, &mut rule)?;

    let weights = rule.weights(&out.residual);
    let cols = out.residual.cols();
    let outliers = rule
        .rejected
        .iter()
        .enumerate()
        .filter(|(_, &r)| r)
        .map(|(p, _)| (p / cols, p % cols))
        .collect();
    let state = HqState {
        w: out.w.clone(),
        h: out.h.clone(),
        residual: out.residual,
        weights,
        gamma: rule.gamma,
        sigma: rule.sigma,
        outliers,
        objective_trace: out.records.iter().map(|r| r.objective).collect(),
        outer_iter: out.records.len(),
        records: out.records,
        termination: out.termination,
        config: cfg,
    };
    Ok(Factorization {
        w: out.w,
        h: out.h,
        state,
    })
}

/// Largest entrywise deviation of `state.weights` from the half-quadratic
/// weights implied by `state.residual`, `state.gamma` and the outlier set.
///
/// Zero for an untampered state.
pub fn weight_consistency_error(state: &HqState) -> f64 {
    let expected = update_weights(&state.residual, state.gamma, &state.outliers);
    expected
        .as_slice()
        .iter()
        .zip(state.weights.as_slice())
        .fold(0.0, |acc, (a, b)| acc.max((a - b).abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn update_weights_examples() {
        let e = DenseMatrix::zeros(2, 3);
        assert_eq!(update_weights(&e, 0.5, &[]), DenseMatrix::filled(2, 3, 1.0));
        let e = DenseMatrix::filled(1, 2, 0.7);
        let q = update_weights(&e, 0.7, &[(0, 1)]);
        assert_eq!(q.get(0, 0), 0.5);
        assert_eq!(q.get(0, 1), 0.0);
    }

    #[test]
    fn nagy_fixed_point_and_degenerate() {
        let e = DenseMatrix::from_fn(10, 10, |i, j| if (i + j) % 2 == 0 { 1.7 } else { -1.7 });
        let g = estimate_scale_nagy(&e, 1.7, 1e-12, 50, 1e-6);
        assert_eq!(g, 1.7);
        assert_eq!(
            estimate_scale_nagy(&DenseMatrix::zeros(3, 3), 1.0, 1e-6, 50, 1e-3),
            1e-3
        );
    }

    #[test]
    fn outliers_examples() {
        assert!(detect_outliers(&DenseMatrix::filled(4, 4, 2.5)).is_empty());
        assert!(detect_outliers(&DenseMatrix::zeros(0, 0)).is_empty());
        assert!(detect_outliers(&DenseMatrix::zeros(3, 3)).is_empty());

        let mut rng = Rng::new(17);
        let mut e = DenseMatrix::from_fn(100, 100, |_, _| rng.uniform());
        let big = rng.sample_indices(10_000, 100);
        for &p in &big {
            e.set(p / 100, p % 100, 500.0);
        }
        let found = detect_outliers(&e);
        for &p in &big {
            assert!(found.contains(&(p / 100, p % 100)));
        }
    }

    #[test]
    fn lemma1_examples() {
        let w = DenseMatrix::identity(3);
        assert!(lemma1_check(&w, &[0.0; 3], 2.0, 1.0, 0.1).unwrap());
        assert!((lemma1_bound(2.0, 1.0, 1.0) - (2.0 + 2f64.sqrt())).abs() < 1e-15);
        assert!((lemma1_bound(2.0, 1.0, 1.0) - 3.4142).abs() < 1e-4);
        let w = DenseMatrix::filled(2, 2, 1.0);
        assert!(matches!(
            lemma1_check(&w, &[0.0; 2], 1.0, 1.0, 1.0),
            Err(Error::NotNormalized(_))
        ));
    }

    #[test]
    fn config_errors() {
        let v = DenseMatrix::filled(4, 4, 1.0);
        let mut cfg = SolverConfig::new(5);
        assert!(factorize(&v, &cfg).is_err());
        cfg.rank = 2;
        cfg.eps2 = 0.0;
        assert!(factorize(&v, &cfg).is_err());
        let mut neg = v.clone();
        neg.set(0, 0, -1.0);
        assert!(factorize(&neg, &SolverConfig::new(1)).is_err());
    }
}
