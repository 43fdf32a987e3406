use clap::{Args, ValueEnum};
use rnmf_core::alternating::{IterationRecord, Termination};
use rnmf_core::baselines::{factorize_baseline, BaselineConfig};
use rnmf_core::hq::{factorize, ScaleMode, SolverConfig, TruncationMode};
use rnmf_core::losses::WeightKind;
use rnmf_core::DenseMatrix;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    TruncatedCauchy,
    Cauchy,
    L2,
    L1,
    L21,
    Huber,
    Cim,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::TruncatedCauchy => "truncated-cauchy",
            Method::Cauchy => "cauchy",
            Method::L2 => "l2",
            Method::L1 => "l1",
            Method::L21 => "l21",
            Method::Huber => "huber",
            Method::Cim => "cim",
        }
    }

    fn baseline_kind(self) -> Option<WeightKind> {
        match self {
            Method::TruncatedCauchy | Method::Cauchy => None,
            Method::L2 => Some(WeightKind::L2),
            Method::L1 => Some(WeightKind::L1),
            Method::L21 => Some(WeightKind::L21Column),
            Method::Huber => Some(WeightKind::Huber),
            Method::Cim => Some(WeightKind::Cim),
        }
    }
}

/// Solver knobs shared by `factorize` and `bench`. Unset values keep the
/// library defaults.
#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub eps1: Option<f64>,
    #[arg(long)]
    pub eps2: Option<f64>,
    #[arg(long)]
    pub max_outer: Option<usize>,
    #[arg(long)]
    pub max_inner: Option<usize>,
    /// Fixed Cauchy scale; the scale is estimated from the residuals when unset.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Explicit truncation level for truncated-cauchy (default: three-sigma rule).
    #[arg(long)]
    pub sigma: Option<f64>,
    /// First outer iteration with outlier rejection.
    #[arg(long)]
    pub burn_in: Option<usize>,
}

pub struct RunOutput {
    pub w: DenseMatrix,
    pub h: DenseMatrix,
    pub records: Vec<IterationRecord>,
    pub termination: Termination,
    /// Fully resolved configuration.
    pub config: serde_json::Value,
}

fn hq_config(v: &DenseMatrix, method: Method, rank: usize, args: &SolverArgs) -> SolverConfig {
    let mut cfg = SolverConfig::new(rank).with_seed(args.seed);
    if let Some(x) = args.eps1 {
        cfg.eps1 = x;
    }
    if let Some(x) = args.eps2 {
        cfg.eps2 = x;
    }
    if let Some(x) = args.max_outer {
        cfg.max_outer = x;
    }
    if let Some(x) = args.max_inner {
        cfg.max_inner = x;
    }
    if let Some(x) = args.burn_in {
        cfg.burn_in = x;
    }
    if let Some(g) = args.gamma {
        cfg.scale = ScaleMode::Fixed(g);
    }
    cfg.truncation = match (method, args.sigma) {
        (Method::Cauchy, _) => TruncationMode::None,
        (_, Some(s)) => TruncationMode::Explicit(s),
        (_, None) => TruncationMode::RobustStat,
    };
    cfg.resolved(v)
}

fn baseline_config(kind: WeightKind, rank: usize, args: &SolverArgs) -> BaselineConfig {
    let mut cfg = BaselineConfig::new(kind, rank).with_seed(args.seed);
    if let Some(x) = args.eps1 {
        cfg.eps1 = x;
    }
    if let Some(x) = args.eps2 {
        cfg.eps2 = x;
    }
    if let Some(x) = args.max_outer {
        cfg.max_outer = x;
    }
    if let Some(x) = args.max_inner {
        cfg.max_inner = x;
    }
    cfg
}

/// `cauchy` runs the half-quadratic solver without truncation so that it
/// can use the estimated scale when `--gamma` is absent.
pub fn run_method(
    v: &DenseMatrix,
    method: Method,
    rank: usize,
    args: &SolverArgs,
) -> anyhow::Result<RunOutput> {
    match method.baseline_kind() {
        None => {
            let cfg = hq_config(v, method, rank, args);
            let f = factorize(v, &cfg)?;
            Ok(RunOutput {
                w: f.w,
                h: f.h,
                records: f.state.records,
                termination: f.state.termination,
                config: serde_json::to_value(cfg)?,
            })
        }
        Some(kind) => {
            let cfg = baseline_config(kind, rank, args);
            let b = factorize_baseline(v, &cfg)?;
            Ok(RunOutput {
                w: b.w,
                h: b.h,
                records: b.records,
                termination: b.termination,
                config: serde_json::to_value(cfg)?,
            })
        }
    }
}

pub fn trace_csv(records: &[IterationRecord]) -> String {
    let mut out = String::from("iteration,objective,gamma,n_outliers\n");
    for r in records {
        let gamma = r.gamma.map(|g| format!("{g:.16e}")).unwrap_or_default();
        out.push_str(&format!(
            "{},{:.16e},{gamma},{}\n",
            r.iteration, r.objective, r.n_outliers
        ));
    }
    out
}
