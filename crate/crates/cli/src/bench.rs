use std::time::Instant;

use anyhow::{bail, Context};
use rayon::prelude::*;
use rnmf_core::datagen::{
    corrupt, gen_clustered, CorruptionKind, CorruptionSpec, DEFAULT_BLOCK_FILL, DEFAULT_PEPPER,
    DEFAULT_SALT,
};
use rnmf_core::eval::{cluster_report, rel_error, KMEANS_RESTARTS};
use rnmf_core::{DenseMatrix, Rng};

use crate::methods::{run_method, Method, SolverArgs};
use crate::CorruptionKindArg;

pub struct Dataset {
    pub v: DenseMatrix,
    pub labels: Vec<usize>,
    pub image_shape: Option<(usize, usize)>,
}

pub struct Grid {
    pub kind: CorruptionKindArg,
    pub levels: Vec<f64>,
    pub methods: Vec<Method>,
    pub trials: usize,
    pub rank: usize,
    pub clusters: usize,
    pub solver: SolverArgs,
}

/// Synthetic clustered data; a fresh draw per trial.
pub struct Synthetic {
    pub m: usize,
    pub n: usize,
    pub spread: f64,
}

pub enum Source {
    Fixed(Dataset),
    Synthetic(Synthetic),
}

struct Row {
    method: Method,
    level: f64,
    trial: usize,
    outcome: Result<(f64, f64, f64), String>,
    runtime: f64,
}

pub fn corruption_for(
    kind: CorruptionKindArg,
    level: f64,
    seed: u64,
) -> anyhow::Result<CorruptionSpec> {
    let kind = match kind {
        CorruptionKindArg::SaltPepper => CorruptionKind::SaltPepper {
            fraction: level,
            low: DEFAULT_PEPPER,
            high: DEFAULT_SALT,
        },
        CorruptionKindArg::Laplace => CorruptionKind::Laplace { scale: level },
        CorruptionKindArg::Block => {
            if level < 1.0 || level.fract() != 0.0 {
                bail!("block levels are integer sizes, got {level}");
            }
            CorruptionKind::Block {
                size: level as usize,
                fill: DEFAULT_BLOCK_FILL,
            }
        }
    };
    Ok(CorruptionSpec { kind, seed })
}

fn run_cell(
    data: &Dataset,
    grid: &Grid,
    method: Method,
    level: f64,
    trial: usize,
    seed: u64,
) -> Row {
    let start = Instant::now();
    let outcome = (|| -> anyhow::Result<(f64, f64, f64)> {
        let spec = corruption_for(grid.kind, level, seed ^ 0x00c0_ffee)?;
        let noisy = corrupt(&data.v, &spec, data.image_shape)?;
        let mut solver = grid.solver.clone();
        solver.seed = seed;
        let out = run_method(&noisy.v, method, grid.rank, &solver)?;
        let err = rel_error(&data.v, &out.w, &out.h)?;
        let report = cluster_report(
            &out.h,
            &data.labels,
            grid.clusters,
            1,
            KMEANS_RESTARTS,
            seed,
            Some(err),
        )?;
        Ok((report.accuracy, report.nmi, err))
    })()
    .map_err(|e| format!("{e:#}"));
    Row {
        method,
        level,
        trial,
        outcome,
        runtime: start.elapsed().as_secs_f64(),
    }
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\"").replace('\n', " "))
}

/// Runs every (level, method, trial) cell and returns the CSV text. Row
/// order follows the grid, not completion order. `image_shape` is only
/// used by block occlusion.
pub fn run_grid(
    source: &Source,
    grid: &Grid,
    image_shape: Option<(usize, usize)>,
) -> anyhow::Result<String> {
    if grid.trials == 0 || grid.levels.is_empty() || grid.methods.is_empty() {
        bail!("bench needs at least one level, method and trial");
    }
    for &level in &grid.levels {
        corruption_for(grid.kind, level, 0)?;
    }
    let base_seed = grid.solver.seed;
    let datasets: Vec<Dataset> = (0..grid.trials)
        .map(|t| {
            let seed = Rng::child(base_seed, t as u64).below(u32::MAX as usize) as u64;
            match source {
                Source::Fixed(d) => Ok(Dataset {
                    v: d.v.clone(),
                    labels: d.labels.clone(),
                    image_shape,
                }),
                Source::Synthetic(s) => {
                    let c = gen_clustered(s.m, s.n, grid.rank, grid.clusters, s.spread, seed)
                        .context("generating clustered data")?;
                    Ok(Dataset {
                        v: c.v,
                        labels: c.labels,
                        image_shape,
                    })
                }
            }
        })
        .collect::<anyhow::Result<_>>()?;

    let mut cells = Vec::new();
    for (li, &level) in grid.levels.iter().enumerate() {
        for &method in &grid.methods {
            for trial in 0..grid.trials {
                let seed = Rng::child(base_seed, (li * grid.trials + trial) as u64)
                    .below(u32::MAX as usize) as u64;
                cells.push((method, level, trial, seed));
            }
        }
    }
    let rows: Vec<Row> = cells
        .par_iter()
        .map(|&(method, level, trial, seed)| {
            run_cell(&datasets[trial], grid, method, level, trial, seed)
        })
        .collect();

    let kind = grid.kind.name();
    let mut out =
        String::from("method,kind,level,trial,accuracy,nmi,rel_error,runtime_secs,error\n");
    for r in rows {
        let (metrics, error) = match r.outcome {
            Ok((acc, nmi, err)) => (format!("{acc:.6},{nmi:.6},{err:.6e}"), String::new()),
            Err(e) => (",,".to_string(), quote(&e)),
        };
        out.push_str(&format!(
            "{},{kind},{},{},{metrics},{:.4},{error}\n",
            r.method.name(),
            r.level,
            r.trial,
            r.runtime
        ));
    }
    Ok(out)
}
