//! Reweighted alternating NMF under the classical robust losses.
//!
//! Every method runs the same alternation as the truncated Cauchy solver
//! with its own entry weights and objective:
//!
//! | method  | objective                       | weight                     |
//! |---------|---------------------------------|----------------------------|
//! | l2      | `sum E^2`                       | 1                          |
//! | l1      | `sum |E|`                       | `tau / max(|E|, tau)`      |
//! | l21     | `sum_j ||E_j||`                 | `tau / max(||E_j||, tau)`  |
//! | huber   | `sum l(E, c)`                   | 1 or `c / |E|`             |
//! | cim     | `sum 1 - exp(-E^2 / 2 s^2)`     | `exp(-E^2 / 2 s^2)`        |
//! | cauchy  | `1/2 sum ln(1 + (E/gamma)^2)`   | `1 / (1 + (E/gamma)^2)`    |
//!
//! The Huber cutoff `c` is the median absolute residual and the CIM width
//! `s` the root mean square residual, both refreshed every outer iteration.

use serde::{Deserialize, Serialize};

use crate::alternating::{
    self, abs_values, median, EngineConfig, IterationRecord, Reweighting, Termination,
};
use crate::error::{Error, Result};
use crate::hq::{DEFAULT_EPS2, DEFAULT_MAX_OUTER};
use crate::losses::{Sigma, TruncatedCauchyLoss, WeightFunction, WeightKind, TAU_SMOOTH};
use crate::matrix::DenseMatrix;
use crate::wnls::{OgmOptions, DEFAULT_EPS1, DEFAULT_MAX_ITER, RELATIVE_FLOOR};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub method: WeightKind,
    /// Scale for the cauchy method (required there, ignored elsewhere).
    pub gamma: Option<f64>,
    pub rank: usize,
    pub eps1: f64,
    pub eps2: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub seed: u64,
}

impl BaselineConfig {
    pub fn new(method: WeightKind, rank: usize) -> Self {
        BaselineConfig {
            method,
            gamma: None,
            rank,
            eps1: DEFAULT_EPS1,
            eps2: DEFAULT_EPS2,
            max_outer: DEFAULT_MAX_OUTER,
            max_inner: DEFAULT_MAX_ITER,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn validate(&self, v: &DenseMatrix) -> Result<()> {
        alternating::validate_input(v, self.rank)?;
        alternating::validate_tolerances(self.eps1, self.eps2)?;
        match self.method {
            WeightKind::TruncatedCauchy => Err(Error::InvalidConfig(
                "truncated-cauchy is not a baseline; use hq::factorize".into(),
            )),
            WeightKind::Cauchy => match self.gamma {
                None => Err(Error::MissingParameter("gamma")),
                Some(g) if !(g > 0.0 && g.is_finite()) => Err(Error::InvalidConfig(format!(
                    "gamma must be positive, got {g}"
                ))),
                Some(_) => Ok(()),
            },
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BaselineResult {
    pub w: DenseMatrix,
    pub h: DenseMatrix,
    /// Objective at the end of each outer iteration.
    pub objective_trace: Vec<f64>,
    pub records: Vec<IterationRecord>,
    pub termination: Termination,
}

/// Per-column residual norms.
pub fn column_norms(e: &DenseMatrix) -> Vec<f64> {
    let mut acc = vec![0.0; e.cols()];
    for i in 0..e.rows() {
        for (a, x) in acc.iter_mut().zip(e.row(i)) {
            *a += x * x;
        }
    }
    acc.into_iter().map(f64::sqrt).collect()
}

/// `e^2` inside the cutoff, linear with matching slope outside.
pub fn huber_loss(e: f64, c: f64) -> f64 {
    let a = e.abs();
    if a <= c {
        a * a
    } else {
        2.0 * c * a - c * c
    }
}

struct BaselineRule {
    func: WeightFunction,
}

impl BaselineRule {
    fn new(cfg: &BaselineConfig) -> Self {
        let mut func = WeightFunction::new(cfg.method);
        func.gamma = cfg.gamma;
        BaselineRule { func }
    }

    fn weight(&self, e: f64) -> f64 {
        self.func
            .weight(e)
            .expect("parameters set in begin_iteration")
    }
}

impl Reweighting for BaselineRule {
    fn begin_iteration(&mut self, _iteration: usize, residual: &DenseMatrix) -> Result<()> {
        match self.func.kind {
            WeightKind::Huber => {
                self.func.cutoff = Some(median(abs_values(residual)).max(TAU_SMOOTH));
            }
            WeightKind::Cim => {
                let ms =
                    residual.as_slice().iter().map(|x| x * x).sum::<f64>() / residual.len() as f64;
                self.func.width = Some(ms.sqrt().max(TAU_SMOOTH));
            }
            _ => {}
        }
        Ok(())
    }

    fn weights(&self, residual: &DenseMatrix) -> DenseMatrix {
        if self.func.kind == WeightKind::L21Column {
            let col_w: Vec<f64> = column_norms(residual)
                .into_iter()
                .map(|n| self.weight(n))
                .collect();
            return DenseMatrix::from_fn(residual.rows(), residual.cols(), |_, j| col_w[j]);
        }
        DenseMatrix::from_fn(residual.rows(), residual.cols(), |i, j| {
            self.weight(residual.get(i, j))
        })
    }

    fn objective(&self, residual: &DenseMatrix) -> f64 {
        let e = residual.as_slice();
        match self.func.kind {
            WeightKind::L2 => e.iter().map(|x| x * x).sum(),
            WeightKind::L1 => e.iter().map(|x| x.abs()).sum(),
            WeightKind::L21Column => column_norms(residual).iter().sum(),
            WeightKind::Huber => {
                let c = self.func.cutoff.unwrap_or(TAU_SMOOTH);
                e.iter().map(|&x| huber_loss(x, c)).sum()
            }
            WeightKind::Cim => {
                let s = self.func.width.unwrap_or(TAU_SMOOTH);
                e.iter()
                    .map(|x| 1.0 - (-(x * x) / (2.0 * s * s)).exp())
                    .sum()
            }
            WeightKind::Cauchy | WeightKind::TruncatedCauchy => TruncatedCauchyLoss {
                gamma: self.func.gamma.unwrap_or(1.0),
                sigma: Sigma::Unbounded,
            }
            .objective_from_residual(residual),
        }
    }

    fn gamma(&self) -> Option<f64> {
        match self.func.kind {
            WeightKind::Cauchy => self.func.gamma,
            _ => None,
        }
    }
}

pub fn factorize_baseline(v: &DenseMatrix, cfg: &BaselineConfig) -> Result<BaselineResult> {
    cfg.validate(v)?;
    let engine = EngineConfig {
        rank: cfg.rank,
        inner: OgmOptions {
            eps1: cfg.eps1,
            max_iter: cfg.max_inner,
            relative_floor: RELATIVE_FLOOR,
        },
        eps2: cfg.eps2,
        max_outer: cfg.max_outer,
        seed: cfg.seed,
    };
    let mut rule = BaselineRule::new(cfg);
    let out = alternating::run(v, &engine, &mut rule)?;
    Ok(BaselineResult {
        w: out.w,
        h: out.h,
        objective_trace: out.records.iter().map(|r| r.objective).collect(),
        records: out.records,
        termination: out.termination,
    })
}
