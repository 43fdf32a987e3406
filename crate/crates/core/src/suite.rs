//! Executable property battery over every module.
//!
//! Each property checks a batch of seeded instances and reports its worst
//! case. A failing property is data, not an error.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alternating::initialize;
use crate::baselines::{factorize_baseline, BaselineConfig};
use crate::datagen::{
    corrupt, gen_line, gen_lowrank, CorruptionKind, CorruptionSpec, SyntheticLineSpec,
};
use crate::error::Result;
use crate::eval::{accuracy, kmeans_detailed, nmi};
use crate::hq::{
    estimate_scale_nagy, factorize, lemma1_bound, lemma1_check, update_weights,
    weight_consistency_error, HqState, ScaleMode, SolverConfig, TruncationMode,
};
use crate::losses::{
    conjugate, g, hq_weight, verify_conjugacy, Sigma, TruncatedCauchyLoss, WeightFunction,
    WeightKind,
};
use crate::matrix::{DenseMatrix, POWER_MAX_ITER, POWER_TOL};
use crate::rng::Rng;
use crate::wnls::{solve_wnls, solve_wnls_with, wnls_gradient, OgmOptions, WnlsProblem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scale {
    Quick,
    Full,
}

#[derive(Debug, Clone, Copy)]
struct Sizes {
    dim: usize,
    rank: usize,
    instances: usize,
    nagy_side: usize,
}

impl Scale {
    fn sizes(self) -> Sizes {
        match self {
            Scale::Quick => Sizes {
                dim: 64,
                rank: 4,
                instances: 8,
                nagy_side: 64,
            },
            Scale::Full => Sizes {
                dim: 512,
                rank: 16,
                instances: 20,
                nagy_side: 320,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub property: String,
    /// Instance holding the worst discrepancy.
    pub instance: usize,
    pub instances: usize,
    pub oracle: f64,
    pub solver: f64,
    pub discrepancy: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub seed: u64,
    pub scale: Scale,
    pub passed: usize,
    pub failed: usize,
    pub results: Vec<OracleResult>,
}

struct Worst {
    name: &'static str,
    tolerance: f64,
    count: usize,
    worst: Option<(usize, f64, f64, f64)>,
}

impl Worst {
    fn new(name: &'static str, tolerance: f64) -> Self {
        Worst {
            name,
            tolerance,
            count: 0,
            worst: None,
        }
    }

    fn push(&mut self, instance: usize, oracle: f64, solver: f64, discrepancy: f64) {
        self.count += 1;
        // NaN discrepancies always win so they surface as failures.
        let replace = match self.worst {
            None => true,
            Some((_, _, _, d)) => discrepancy.is_nan() || discrepancy > d,
        };
        if replace && !self.worst.is_some_and(|w| w.3.is_nan()) {
            self.worst = Some((instance, oracle, solver, discrepancy));
        }
    }

    /// `|oracle - solver|`.
    fn diff(&mut self, instance: usize, oracle: f64, solver: f64) {
        self.push(instance, oracle, solver, (oracle - solver).abs());
    }

    /// Amount by which `value` exceeds `bound`.
    fn excess(&mut self, instance: usize, bound: f64, value: f64) {
        self.push(instance, bound, value, (value - bound).max(0.0));
    }

    /// 0 when `ok`, 1 otherwise.
    fn holds(&mut self, instance: usize, ok: bool) {
        self.push(
            instance,
            1.0,
            f64::from(u8::from(ok)),
            f64::from(u8::from(!ok)),
        );
    }

    fn finish(self) -> OracleResult {
        let (instance, oracle, solver, discrepancy) = self.worst.unwrap_or((0, 0.0, 0.0, 0.0));
        OracleResult {
            property: self.name.to_string(),
            instance,
            instances: self.count,
            oracle,
            solver,
            discrepancy,
            tolerance: self.tolerance,
            pass: discrepancy <= self.tolerance,
        }
    }
}

fn random_matrix(rng: &mut Rng, rows: usize, cols: usize) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.uniform())
}

fn planted_salt_pepper(m: usize, n: usize, r: usize, p: f64, seed: u64) -> Result<DenseMatrix> {
    let lr = gen_lowrank(m, n, r, seed)?;
    let spec = CorruptionSpec {
        kind: CorruptionKind::SaltPepper {
            fraction: p,
            low: 0.0,
            high: lr.v.max_abs(),
        },
        seed: seed ^ 0x5eed,
    };
    Ok(corrupt(&lr.v, &spec, None)?.v)
}

// ---------------------------------------------------------------- matrix

fn matmul_associative(name: &'static str, seed: u64, s: Sizes) -> Result<OracleResult> {
    let mut out = Worst::new(name, 1e-10);
    for k in 0..s.instances {
        let mut rng = Rng::child(seed, k as u64);
        let (a, b, c, d) = (
            1 + rng.below(s.dim),
            1 + rng.below(s.dim),
            1 + rng.below(s.dim),
            1 + rng.below(s.dim),
        );
        let x = random_matrix(&mut rng, a, b).scale(4.0)?;
        let y = random_matrix(&mut rng, b, c).scale(4.0)?;
        let z = random_matrix(&mut rng, c, d).scale(4.0)?;
        let left = x.matmul(&y)?.matmul(&z)?;
        let right = x.matmul(&y.matmul(&z)?)?;
        for (l, r) in left.as_slice().iter().zip(right.as_slice()) {
            if l.abs() >= 1.0 {
                out.push(k, *l, *r, (l - r).abs() / l.abs());
            }
        }
    }
    Ok(out.finish())
}

fn projection_idempotent(name: &'static str, seed: u64, s: Sizes) -> Result<OracleResult> {
    let mut out = Worst::new(name, 0.0);
    for k in 0..s.instances {
        let mut rng = Rng::child(seed, k as u64);
        let a = DenseMatrix::from_fn(s.dim, s.dim / 2, |_, _| rng.uniform_range(-1.0, 1.0));
        let once = a.project_nonneg();
        let twice = once.project_nonneg();
        out.holds(
            k,
            once.as_slice()
                .iter()
                .zip(twice.as_slice())
                .all(|(x, y)| x.to_bits() == y.to_bits()),
        );
    }
    Ok(out.finish())
}

fn spectral_norm_dominates(name: &'static str, seed: u64, s: Sizes) -> Result<OracleResult> {
    let mut out = Worst::new(name, 1e-6);
    for k in 0..s.instances {
        let mut rng = Rng::child(seed, k as u64);
        let b = random_matrix(&mut rng, s.dim, s.rank.max(2));
        let a = b.transpose().matmul(&b)?;
        let norm = a.spectral_norm(POWER_TOL, POWER_MAX_ITER)?;
        for _ in 0..100 {
            let v: Vec<f64> = (0..a.cols())
                .map(|_| rng.uniform_range(-1.0, 1.0))
                .collect();
            let vn = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let av = a.matmul(&DenseMatrix::new(a.cols(), 1, v)?)?;
            let ratio = av.frobenius_norm() / vn;
            out.push(k, norm, ratio, ((ratio - norm) / norm).max(0.0));
        }
    }
    Ok(out.finish())
}

fn rng_deterministic(name: &'static str, seed: u64, _s: Sizes) -> Result<OracleResult> {
    let mut out = Worst::new(name, 0.0);
    let draw = |sd: u64| {
        let mut r = Rng::new(sd);
        (0..1000).map(|_| r.uniform().to_bits()).collect::<Vec<_>>()
    };
    for k in 0..4u64 {
        out.holds(k as usize, draw(seed + k) == draw(seed + k));
    }
    Ok(out.finish())
}

// ---------------------------------------------------------------- losses

const SIGMAS: [f64; 3] = [0.5, 1.0, 5.0];

fn hq_weight_reciprocal(name: &'static str, _seed: u64, _s: Sizes) -> Result<OracleResult> {
    let mut out = Worst::new(name, f64::EPSILON);
    for (k, &sigma) in SIGMAS.iter().enumerate() {
        for i in 0..1000 {
            let x = sigma * i as f64 / 999.0;
            out.diff(k, 1.0, hq_weight(x, Sigma::Finite(sigma))? * (1.0 + x));
        }
    }
    Ok(out.finish())
}

fn g_monotone_concave(name: &'static str, seed: u64, _s: Sizes) -> Result<OracleResult> {
    let mut out = Worst::new(name, 1e-12);
    let mut rng = Rng::new(seed);
    for (k, &sigma) in SIGMAS.iter().enumerate() {
        let s = Sigma::Finite(sigma);
        for _ in 0..1000 {
            let a = rng.uniform_range(0.0, sigma);
            let b = rng.uniform_range(0.0, sigma);
            let (x1, x2) = if a <= b { (a, b) } else { (b, a) };
            out.excess(k, g(x2, s)?, g(x1, s)?);
            let mid = g(0.5 * (x1 + x2), s)?;
            out.excess(k, mid, 0.5 * (g(x1, s)? + g(x2, s)?));
        }
    }
    Ok(out.finish())
}

fn weight_grid() -> impl Iterator<Item = f64> {
    (0..=400).map(|i| -20.0 + 0.1 * i as f64)
}

fn weight_functions() -> Vec<WeightFunction> {
    vec![
        WeightFunction::l2(),
        WeightFunction::l1(),
        WeightFunction::l21(),
        WeightFunction::huber(1.5),
        WeightFunction::cim(2.0),
        WeightFunction::cauchy(0.7),
        WeightFunction::truncated_cauchy(0.7, Sigma::Finite(4.0)),
    ]
}

fn truncated_unbounded_is_cauchy(
    name: &'static str,
    _seed: u64,
    _s: Sizes,
) -> Result<OracleResult> {
    let mut out = Worst::new(name, 0.0);
    for (k, gamma) in [0.3, 1.0, 7.0].into_iter().enumerate() {
        let a = WeightFunction::truncated_cauchy(gamma, Sigma::Unbounded);
        let b = WeightFunction::cauchy(gamma);
        for e in weight_grid() {
            out.diff(k, b.weight(e)?, a.weight(e)?);
        }
    }
    Ok(out.finish())
}

fn weights_monotone_and_bounded(name: &'static str, _seed: u64, _s: Sizes) -> Result<OracleResult> {
    let mut out = Worst::new(name, 0.0);
    for (k, f) in weight_functions().into_iter().enumerate() {
        let mut prev = f64::INFINITY;
        for i in 0..=200 {
            let e = 0.1 * i as f64;
            let w = f.weight(e)?;
            out.excess(k, 1.0, w);
            out.excess(k, w, 0.0);
            out.diff(k, w, f.weight(-e)?);
            if f.kind != WeightKind::L2 {
                out.excess(k, prev, w);
            }
            prev = w;
        }
    }
    Ok(out.finish())
}

fn conjugacy(name: &'static str, _seed: u64, _s: Sizes) -> Result<OracleResult> {
    let mut out = Worst::new(name, 1e-4);
    for (k, sigma) in [1.0, 5.0].into_iter().enumerate() {
        let s = Sigma::Finite(sigma);
        for i in 0..=60 {
            let x = 3.0 * sigma * i as f64 / 60.0;
            out.diff(k, -g(x, s)?, verify_conjugacy(x, s));
            // The closed-form maximizer attains the supremum.
            let y = -hq_weight(x, s)?;
            out.diff(k, -g(x, s)?, y * x - conjugate(y, s));
        }
    }
    Ok(out.finish())
}

// ---------------------------------------------------------------- wnls

fn random_wnls(rng: &mut Rng, m: usize, r: usize) -> (DenseMatrix, Vec<f64>, Vec<f64>, Vec<f64>) {
    let w = random_matrix(rng, m, r);
    let d: Vec<f64> = (0..m).map(|_| rng.uniform()).collect();
    let v: Vec<f64> = (0..m).map(|_| rng.uniform_range(0.0, 2.0)).collect();
    let h0: Vec<f64> = (0..r).map(|_| rng.uniform()).collect();
    (w, d, v, h0)
}

fn wnls_monotone(name: &'static str, seed: u64, s: Sizes) -> Result<OracleResult> {
    let mut out = Worst::new(name, 1e-10);
    for k in 0..s.instances * 10 {
        let mut rng = Rng::child(seed, k as u64);
        let (w, d, v, h0) = random_wnls(&mut rng, s.dim, s.rank);
        let p = WnlsProblem::new(&w, &d, &v, &h0)?;
        let (h, _) = solve_wnls(&p, 1e-6, 500)?;
        let (f0, f1) = (p.objective(&h0), p.objective(&h));
        out.push(k, f0, f1, ((f1 - f0) / f0.abs().max(1e-300)).max(0.0));
    }
    Ok(out.finish())
}

/// Gaussian elimination with partial pivoting; `None` when singular.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            let (top, bottom) = a.split_at_mut(row);
            for (x, p) in bottom[0][col..].iter_mut().zip(&top[col][col..]) {
                *x -= f * p;
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|c| a[row][c] * x[c]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    Some(x)
}

/// Exhaustive active-set minimum of the weighted problem.
fn active_set_minimum(p: &WnlsProblem<'_>, w: &DenseMatrix, d: &[f64], v: &[f64]) -> f64 {
    let (m, r) = w.shape();
    let mut best = p.objective(&vec![0.0; r]);
    for mask in 1u32..(1 << r) {
        let free: Vec<usize> = (0..r).filter(|&j| mask & (1 << j) != 0).collect();
        let a: Vec<Vec<f64>> = free
            .iter()
            .map(|&j| {
                free.iter()
                    .map(|&l| (0..m).map(|i| d[i] * w.get(i, j) * w.get(i, l)).sum())
                    .collect()
            })
            .collect();
        let b: Vec<f64> = free
            .iter()
            .map(|&j| (0..m).map(|i| d[i] * w.get(i, j) * v[i]).sum())
            .collect();
        if let Some(x) = solve_dense(a, b) {
            if x.iter().all(|&t| t >= 0.0) {
                let mut h = vec![0.0; r];
                for (&j, &t) in free.iter().zip(&x) {
                    h[j] = t;
                }
                best = best.min(p.objective(&h));
            }
        }
    }
    best
}

fn wnls_oracle(name: &'static str, seed: u64, _s: Sizes) -> Result<OracleResult> {
    let mut out = Worst::new(name, 1e-6);
    let opts = OgmOptions {
        eps1: 1e-12,
        max_iter: 50_000,
        relative_floor: 0.0,
    };
    for k in 0..50 {
        let mut rng = Rng::child(seed, k as u64);
        let r = 1 + rng.below(3);
        let m = r + rng.below(7 - r);
        let (w, d, v, h0) = random_wnls(&mut rng, m, r);
        let p = WnlsProblem::new(&w, &d, &v, &h0)?;
        let (h, _) = solve_wnls_with(&p, &opts)?;
        out.diff(k, active_set_minimum(&p, &w, &d, &v), p.objective(&h));
    }
    Ok(out.finish())
}

fn wnls_gradient_check(name: &'static str, seed: u64, s: Sizes) -> Result<OracleResult> {
    let mut out = Worst::new(name, 1e-5);
    for k in 0..s.instances {
        let mut rng = Rng::child(seed, k as u64);
        let (w, d, v, z) = random_wnls(&mut rng, s.dim, s.rank);
        let p = WnlsProblem::new(&w, &d, &v, &z)?;
        let grad = wnls_gradient(&p, &z)?;
        for (j, &gj) in grad.iter().enumerate() {
            let step = 1e-6;
            let (mut a, mut b) = (z.clone(), z.clone());
            a[j] += step;
            b[j] -= step;
            let fd = (p.objective(&a) - p.objective(&b)) / (2.0 * step);
            out.push(k, fd, gj, (fd - gj).abs() / fd.abs().max(1.0));
        }
    }
    Ok(out.finish())
}

fn wnls_scaling(name: &'static str, seed: u64, s: Sizes) -> Result<OracleResult> {
    let mut out = Worst::new(name, 1e-8);
    for k in 0..s.instances * 5 {
        let mut rng = Rng::child(seed, k as u64);
        let (w, d, v, h0) = random_wnls(&mut rng, s.dim.min(32), s.rank);
        let c = rng.uniform_range(0.1, 10.0);
        let dc: Vec<f64> = d.iter().map(|x| x * c).collect();
        let p = WnlsProblem::new(&w, &d, &v, &h0)?;
        let q = WnlsProblem::new(&w, &dc, &v, &h0)?;
        let (a, _) = solve_wnls(&p, 1e-6, 500)?;
        let (b, _) = solve_wnls(&q, 1e-6, 500)?;
        for (x, y) in a.iter().zip(&b) {
            out.diff(k, *x, *y);
        }
    }
    Ok(out.finish())
}

fn ogm_stopping(name: &'static str, seed: u64, s: Sizes) -> Result<OracleResult> {
    let mut out = Worst::new(name, 0.0);
    for k in 0..s.instances * 5 {
        let mut rng = Rng::child(seed, k as u64);
        let (w, d, v, h0) = random_wnls(&mut rng, s.dim.min(32), s.rank);
        let p = WnlsProblem::new(&w, &d, &v, &h0)?;
        let (_, trace) = solve_wnls(&p, 1e-6, 500)?;
        if trace.converged && !trace.skipped && trace.initial_pg_norm > 0.0 {
            out.excess(k, 1e-3 * trace.initial_pg_norm, trace.final_pg_norm);
        } else {
            out.holds(
                k,
                trace.skipped || trace.initial_pg_norm == 0.0 || trace.iterations == 500,
            );
        }
    }
    Ok(out.finish())
}

// ---------------------------------------------------------------- hq

fn hq_config(rank: usize, seed: u64) -> SolverConfig {
    let mut cfg = SolverConfig::new(rank).with_seed(seed);
    cfg.max_outer = 60;
    cfg
}

fn hq_runs(seed: u64, s: Sizes) -> Result<Vec<(DenseMatrix, SolverConfig, HqState)>> {
    (0..s.instances)
        .map(|k| {
            let sd = Rng::child(seed, k as u64).below(1 << 30) as u64;
            let side = s.dim.min(64);
            let v = planted_salt_pepper(side, side, s.rank, 0.2, sd)?;
            let cfg = hq_config(s.rank, sd);
            let f = factorize(&v, &cfg)?;
            Ok((v, cfg, f.state))
        })
        .collect()
}

fn hq_descent(runs: &[(DenseMatrix, SolverConfig, HqState)]) -> OracleResult {
    let mut out = Worst::new("hq/descent-per-step", 1e-8);
    for (k, (_, _, st)) in runs.iter().enumerate() {
        for r in &st.records {
            out.excess(k, r.objective_start, r.objective);
        }
    }
    out.finish()
}

fn hq_weight_consistency(runs: &[(DenseMatrix, SolverConfig, HqState)]) -> OracleResult {
    let mut out = Worst::new("hq/weight-consistency", 0.0);
    for (k, (_, _, st)) in runs.iter().enumerate() {
        out.push(
            k,
            0.0,
            weight_consistency_error(st),
            weight_consistency_error(st),
        );
        for &(i, j) in &st.outliers {
            out.diff(k, 0.0, st.weights.get(i, j));
        }
        // Non-outlier weights equal the losses-module map.
        for (p, (&e, &q)) in st
            .residual
            .as_slice()
            .iter()
            .zip(st.weights.as_slice())
            .enumerate()
        {
            let cols = st.residual.cols();
            if !st.outliers.contains(&(p / cols, p % cols)) {
                let x = (e / st.gamma) * (e / st.gamma);
                out.diff(k, hq_weight(x, Sigma::Unbounded).unwrap_or(f64::NAN), q);
            }
        }
    }
    out.finish()
}

fn hq_tamper_control(runs: &[(DenseMatrix, SolverConfig, HqState)]) -> OracleResult {
    let mut out = Worst::new("hq/weight-consistency-detects-tampering", 0.0);
    for (k, (_, _, st)) in runs.iter().enumerate() {
        if let Some(&(i, j)) = st.outliers.first() {
            let mut bad = st.clone();
            bad.weights.set(i, j, 0.5);
            out.holds(k, weight_consistency_error(&bad) > 0.0);
        }
    }
    out.finish()
}

fn hq_stopping(runs: &[(DenseMatrix, SolverConfig, HqState)]) -> Result<OracleResult> {
    let mut out = Worst::new("hq/outer-stopping-rule", 0.0);
    for (k, (v, cfg, st)) in runs.iter().enumerate() {
        let (w0, h0) = initialize(v, cfg.rank, cfg.seed);
        let e0 = v.sub(&w0.matmul(&h0)?)?;
        let loss = TruncatedCauchyLoss {
            gamma: st.gamma,
            sigma: st.sigma,
        };
        let last = st.records.last().expect("at least one iteration");
        let satisfied = (last.objective_start - last.objective).abs()
            <= cfg.eps2 * (loss.objective_from_residual(&e0) - last.objective).abs();
        let converged = st.termination == crate::alternating::Termination::Converged;
        out.holds(
            k,
            converged == (satisfied && st.records.len() > 1)
                || (!converged && st.records.len() == cfg.max_outer),
        );
    }
    Ok(out.finish())
}

fn hq_untruncated_is_cauchy(name: &'static str, seed: u64, s: Sizes) -> Result<OracleResult> {
    let mut out = Worst::new(name, 0.0);
    for k in 0..s.instances.min(4) {
        let v = planted_salt_pepper(24, 20, 2, 0.1, seed + k as u64)?;
        let gamma = 0.4;
        let mut cfg = hq_config(2, seed + k as u64);
        cfg.truncation = TruncationMode::None;
        cfg.scale = ScaleMode::Fixed(gamma);
        cfg.max_outer = 10;
        let st = factorize(&v, &cfg)?.state;
        let f = WeightFunction::cauchy(gamma);
        for (e, q) in st.residual.as_slice().iter().zip(st.weights.as_slice()) {
            out.holds(k, *q > 0.0);
            out.diff(k, f.weight(*e)?, *q);
        }
    }
    Ok(out.finish())
}

fn hq_thread_determinism(name: &'static str, seed: u64, s: Sizes) -> Result<OracleResult> {
    let mut out = Worst::new(name, 0.0);
    let v = planted_salt_pepper(s.dim.min(64), s.dim.min(48), s.rank, 0.2, seed)?;
    let cfg = hq_config(s.rank, seed);
    let run = |threads: usize| -> Result<(DenseMatrix, DenseMatrix)> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| crate::Error::InvalidConfig(e.to_string()))?;
        let f = pool.install(|| factorize(&v, &cfg))?;
        Ok((f.w, f.h))
    };
    let one = run(1)?;
    for (k, t) in [2usize, 4].into_iter().enumerate() {
        let other = run(t)?;
        out.holds(k, one == other);
    }
    let base = BaselineConfig::new(WeightKind::Huber, s.rank).with_seed(seed);
    let b1 = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| crate::Error::InvalidConfig(e.to_string()))?
        .install(|| factorize_baseline(&v, &base))?;
    let b4 = rayon::ThreadPoolBuilder::new()
        .num_threads(4)
        .build()
        .map_err(|e| crate::Error::InvalidConfig(e.to_string()))?
        .install(|| factorize_baseline(&v, &base))?;
    out.holds(2, b1.w == b4.w && b1.h == b4.h);
    Ok(out.finish())
}

fn nagy_checks(seed: u64, s: Sizes) -> Result<Vec<OracleResult>> {
    let mut fixed = Worst::new("hq/nagy-fixed-point", 1e-12);
    let mut mc = Worst::new("hq/nagy-cauchy-scale", 0.10);
    for (k, gamma) in [0.5, 2.0, 10.0].into_iter().enumerate() {
        let mut rng = Rng::child(seed, k as u64);
        let side = s.nagy_side;
        let e = DenseMatrix::from_fn(side, side, |_, _| {
            gamma * (std::f64::consts::PI * (rng.uniform() - 0.5)).tan()
        });
        let est = estimate_scale_nagy(&e, 1.0, 1e-9, 1000, 1e-12);
        mc.push(k, gamma, est, (est - gamma).abs() / gamma);

        let signs = DenseMatrix::from_fn(8, 8, |_, _| if rng.coin() { gamma } else { -gamma });
        let once = estimate_scale_nagy(&signs, gamma, 0.0, 1, 1e-12);
        fixed.push(k, gamma, once, (once - gamma).abs() / gamma);
    }
    Ok(vec![fixed.finish(), mc.finish()])
}

fn lemma1(name: &'static str, seed: u64, s: Sizes) -> Result<OracleResult> {
    let mut out = Worst::new(name, 0.0);
    for k in 0..s.instances {
        let sd = seed.wrapping_add(k as u64);
        let v = planted_salt_pepper(30, 24, 3, 0.2, sd)?;
        let sigma = [0.5, 1.0, 4.0][k % 3];
        let mut cfg = hq_config(3, sd);
        cfg.truncation = TruncationMode::Explicit(sigma);
        let f = factorize(&v, &cfg)?;
        let (wn, scales) = f.w.normalize_columns()?;
        let hn = f.h.scale_rows(&scales)?;
        for j in 0..v.cols() {
            let alpha = v.column(j).iter().map(|x| x * x).sum::<f64>().sqrt();
            let h = hn.column(j);
            let norm = h.iter().map(|x| x * x).sum::<f64>().sqrt();
            let bound = lemma1_bound(sigma, f.state.gamma, alpha);
            let ok = lemma1_check(&wn, &h, sigma, f.state.gamma, alpha)?;
            out.excess(k, bound, norm);
            out.holds(k, ok == (norm <= bound));
        }
    }
    Ok(out.finish())
}

fn complexity_smoke(name: &'static str, seed: u64, s: Sizes) -> Result<OracleResult> {
    let mut out = Worst::new(name, 2.5);
    let m = s.dim.min(128);
    let per_iter = |rows: usize, cols: usize| -> Result<f64> {
        let v = planted_salt_pepper(rows, cols, s.rank, 0.1, seed)?;
        let mut cfg = hq_config(s.rank, seed);
        cfg.max_outer = 8;
        cfg.eps2 = 1e-300;
        let mut times = Vec::new();
        for _ in 0..3 {
            let t = Instant::now();
            let f = factorize(&v, &cfg)?;
            times.push(t.elapsed().as_secs_f64() / f.state.outer_iter as f64);
        }
        times.sort_by(f64::total_cmp);
        Ok(times[1])
    };
    let small = per_iter(m, m)?;
    let large = per_iter(2 * m, m)?;
    out.push(0, small, large, large / small);
    Ok(out.finish())
}

fn line_recovery(name: &'static str, seed: u64, _s: Sizes) -> Result<OracleResult> {
    let mut out = Worst::new(name, 5.0);
    for k in 0..10u64 {
        let spec = SyntheticLineSpec {
            n_outliers: 80,
            seed: seed.wrapping_add(k),
            ..Default::default()
        };
        let d = gen_line(&spec)?;
        let f = factorize(&d.v, &SolverConfig::new(1).with_seed(spec.seed))?;
        let (a, b) = (f.w.get(0, 0), f.w.get(1, 0));
        let cos = (a + spec.slope * b)
            / ((a * a + b * b).sqrt() * (1.0 + spec.slope * spec.slope).sqrt());
        let deg = cos.abs().min(1.0).acos().to_degrees();
        out.push(k as usize, 0.0, deg, deg);
    }
    Ok(out.finish())
}

// ---------------------------------------------------------------- baselines

fn l2_monotone(name: &'static str, seed: u64, s: Sizes) -> Result<OracleResult> {
    let mut out = Worst::new(name, 1e-8);
    for k in 0..s.instances.min(6) {
        let v = planted_salt_pepper(s.dim.min(40), 30, s.rank, 0.1, seed + k as u64)?;
        let mut cfg = BaselineConfig::new(WeightKind::L2, s.rank).with_seed(seed + k as u64);
        cfg.max_outer = 80;
        let res = factorize_baseline(&v, &cfg)?;
        for pair in res.objective_trace.windows(2) {
            out.excess(k, pair[0], pair[1]);
        }
        for r in &res.records {
            out.excess(k, r.objective_start, r.objective);
        }
    }
    Ok(out.finish())
}

fn cauchy_baseline_matches_hq(name: &'static str, seed: u64, s: Sizes) -> Result<OracleResult> {
    let mut out = Worst::new(name, 1e-10);
    for k in 0..s.instances.min(4) {
        let sd = seed + k as u64;
        let v = planted_salt_pepper(s.dim.min(40), 32, s.rank, 0.2, sd)?;
        let gamma = 0.3;
        let mut hc = hq_config(s.rank, sd);
        hc.truncation = TruncationMode::None;
        hc.scale = ScaleMode::Fixed(gamma);
        let mut bc = BaselineConfig::new(WeightKind::Cauchy, s.rank).with_seed(sd);
        bc.gamma = Some(gamma);
        bc.max_outer = hc.max_outer;
        let a = factorize(&v, &hc)?.state.objective_trace;
        let b = factorize_baseline(&v, &bc)?.objective_trace;
        out.holds(k, a.len() == b.len());
        for (x, y) in a.iter().zip(&b) {
            out.diff(k, *x, *y);
        }
    }
    Ok(out.finish())
}

// ---------------------------------------------------------------- datagen

fn corruption_checks(seed: u64, s: Sizes) -> Result<Vec<OracleResult>> {
    let mut outside = Worst::new("datagen/only-mask-altered", 0.0);
    let mut nonneg = Worst::new("datagen/outputs-nonnegative", 0.0);
    let mut determinism = Worst::new("datagen/seed-determinism", 0.0);
    let side = 16;
    let base = gen_lowrank(side * side, s.instances, 2, seed)?
        .v
        .scale(100.0)?;
    let specs = [
        CorruptionSpec::salt_pepper(0.3, seed),
        CorruptionSpec::block(5, seed),
        CorruptionSpec::laplace(40.0, seed),
    ];
    for (k, spec) in specs.iter().enumerate() {
        let a = corrupt(&base, spec, Some((side, side)))?;
        let b = corrupt(&base, spec, Some((side, side)))?;
        determinism.holds(k, a.v == b.v && a.mask == b.mask);
        nonneg.holds(k, a.v.find_negative().is_none());
        let mut masked = vec![false; base.len()];
        for &(i, j) in &a.mask {
            masked[i * base.cols() + j] = true;
        }
        let untouched = base
            .as_slice()
            .iter()
            .zip(a.v.as_slice())
            .zip(&masked)
            .all(|((x, y), &m)| m || x == y);
        outside.holds(k, untouched);
    }
    let l1 = gen_line(&SyntheticLineSpec {
        n_outliers: 40,
        seed,
        ..Default::default()
    })?;
    let l2 = gen_line(&SyntheticLineSpec {
        n_outliers: 40,
        seed,
        ..Default::default()
    })?;
    determinism.holds(3, l1.v == l2.v && l1.outlier_indices == l2.outlier_indices);
    nonneg.holds(3, l1.v.find_negative().is_none());
    let g1 = gen_lowrank(20, 10, 3, seed)?;
    determinism.holds(4, g1.v == gen_lowrank(20, 10, 3, seed)?.v);
    nonneg.holds(4, g1.v.find_negative().is_none());
    Ok(vec![
        outside.finish(),
        nonneg.finish(),
        determinism.finish(),
    ])
}

// ---------------------------------------------------------------- eval

fn metric_checks(seed: u64, s: Sizes) -> Result<Vec<OracleResult>> {
    let mut perm = Worst::new("eval/permutation-invariance", 1e-12);
    let mut sym = Worst::new("eval/accuracy-symmetric", 1e-12);
    let mut rng = Rng::new(seed);
    for k in 0..s.instances * 4 {
        let classes = 2 + rng.below(6);
        let n = 50 + rng.below(200);
        let truth: Vec<usize> = (0..n).map(|_| rng.below(classes)).collect();
        let pred: Vec<usize> = truth
            .iter()
            .map(|&t| {
                if rng.uniform() < 0.3 {
                    rng.below(classes)
                } else {
                    t
                }
            })
            .collect();
        let mut map: Vec<usize> = (0..classes).collect();
        rng.shuffle(&mut map);
        let relabeled: Vec<usize> = pred.iter().map(|&p| map[p]).collect();
        perm.diff(k, accuracy(&pred, &truth)?, accuracy(&relabeled, &truth)?);
        perm.diff(k, nmi(&pred, &truth)?, nmi(&relabeled, &truth)?);
        sym.diff(k, accuracy(&pred, &truth)?, accuracy(&truth, &pred)?);
    }
    let mut inertia = Worst::new("eval/kmeans-inertia-nonincreasing", 1e-9);
    for k in 0..s.instances {
        let mut rng = Rng::child(seed, k as u64);
        let h = random_matrix(&mut rng, s.rank, 200);
        let r = kmeans_detailed(&h, 5, 3, seed + k as u64)?;
        for pair in r.history.windows(2) {
            inertia.excess(k, pair[0] * (1.0 + 1e-12), pair[1]);
        }
    }
    Ok(vec![perm.finish(), sym.finish(), inertia.finish()])
}

type Property = fn(&'static str, u64, Sizes) -> Result<OracleResult>;

const PROPERTIES: [(&str, Property); 20] = [
    ("matrix/matmul-associative", matmul_associative),
    ("matrix/project-idempotent", projection_idempotent),
    ("matrix/spectral-norm-dominates", spectral_norm_dominates),
    ("matrix/rng-stream-deterministic", rng_deterministic),
    ("losses/hq-weight-times-one-plus-x", hq_weight_reciprocal),
    ("losses/g-monotone-concave", g_monotone_concave),
    (
        "losses/unbounded-truncation-is-cauchy",
        truncated_unbounded_is_cauchy,
    ),
    (
        "losses/weights-monotone-in-unit-interval",
        weights_monotone_and_bounded,
    ),
    ("losses/conjugacy-grid", conjugacy),
    ("wnls/objective-below-start", wnls_monotone),
    ("wnls/active-set-oracle", wnls_oracle),
    ("wnls/gradient-finite-differences", wnls_gradient_check),
    ("wnls/weight-scaling-invariance", wnls_scaling),
    ("wnls/stopping-rule", ogm_stopping),
    (
        "hq/untruncated-fixed-scale-weights",
        hq_untruncated_is_cauchy,
    ),
    ("hq/lemma1-bound", lemma1),
    ("hq/line-subspace-recovery-deg", line_recovery),
    ("baselines/l2-monotone", l2_monotone),
    (
        "baselines/cauchy-equals-untruncated-hq",
        cauchy_baseline_matches_hq,
    ),
    ("hq/thread-count-determinism", hq_thread_determinism),
];

/// Reports an error raised while checking a property as a failure.
fn errored(name: &str) -> OracleResult {
    OracleResult {
        property: name.to_string(),
        instance: 0,
        instances: 0,
        oracle: f64::NAN,
        solver: f64::NAN,
        discrepancy: f64::INFINITY,
        tolerance: 0.0,
        pass: false,
    }
}

fn guarded(name: &'static str, property: Property, seed: u64, s: Sizes) -> OracleResult {
    property(name, seed, s).unwrap_or_else(|_| errored(name))
}

fn guarded_many(group: &str, results: Result<Vec<OracleResult>>) -> Vec<OracleResult> {
    results.unwrap_or_else(|_| vec![errored(group)])
}

/// Runs every property at the chosen scale. Deterministic per seed apart
/// from the wall-clock ratio of the complexity check.
pub fn run_suite(seed: u64, scale: Scale) -> SuiteReport {
    let s = scale.sizes();
    let mut results: Vec<OracleResult> = PROPERTIES
        .par_iter()
        .map(|&(name, p)| guarded(name, p, seed, s))
        .collect();
    results.extend(guarded_many("hq/nagy", nagy_checks(seed, s)));
    match hq_runs(seed, s) {
        Ok(runs) => {
            results.push(hq_descent(&runs));
            results.push(hq_weight_consistency(&runs));
            results.push(hq_tamper_control(&runs));
            results.push(hq_stopping(&runs).unwrap_or_else(|_| errored("hq/outer-stopping-rule")));
        }
        Err(_) => results.push(errored("hq/solver-runs")),
    }
    results.extend(guarded_many("datagen", corruption_checks(seed, s)));
    results.extend(guarded_many("eval", metric_checks(seed, s)));
    // Timed last and alone so other properties do not share the cores.
    results.push(guarded(
        "hq/per-iteration-time-doubling",
        complexity_smoke,
        seed,
        s,
    ));
    let passed = results.iter().filter(|r| r.pass).count();
    SuiteReport {
        seed,
        scale,
        passed,
        failed: results.len() - passed,
        results,
    }
}

/// Tampering fixture: a solver state whose outlier weights were not zeroed.
pub fn tampered_state(seed: u64) -> Result<HqState> {
    let v = planted_salt_pepper(24, 20, 2, 0.3, seed)?;
    let mut st = factorize(&v, &hq_config(2, seed))?.state;
    if st.outliers.is_empty() {
        st.outliers.push((0, 0));
        st.weights = update_weights(&st.residual, st.gamma, &st.outliers);
    }
    let (i, j) = st.outliers[0];
    st.weights.set(i, j, 1.0);
    Ok(st)
}
