mod bench;
mod methods;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{CommandFactory, Parser, Subcommand, ValueEnum};
use rnmf_core::alternating::Termination;
use rnmf_core::datagen::{
    corrupt, gen_clustered, gen_line, gen_lowrank, CorruptionKind, CorruptionSpec, OutlierAxis,
    SyntheticLineSpec, DEFAULT_BLOCK_FILL, DEFAULT_PEPPER, DEFAULT_SALT, LINE_X_MAX,
};
use rnmf_core::eval::{cluster_report, rel_error, KMEANS_RESTARTS};
use rnmf_core::io::{
    load_pgm_dir, read_index_list, read_matrix_csv, write_index_list, write_json, write_mask_csv,
    write_matrix_csv,
};
use rnmf_core::suite::{run_suite, Scale};
use rnmf_core::DenseMatrix;
use serde::Serialize;

use crate::bench::{Grid, Source, Synthetic};
use crate::methods::{run_method, trace_csv, Method, SolverArgs};

#[derive(Parser)]
#[command(
    name = "rnmf",
    version,
    about = "Robust non-negative matrix factorization experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic data.
    Synth {
        #[command(subcommand)]
        kind: SynthKind,
    },
    /// Corrupt a matrix and record which entries changed.
    Corrupt(CorruptArgs),
    /// Factorize a matrix with one of the solvers.
    Factorize(FactorizeArgs),
    /// Cluster coefficient columns and score them against labels.
    Eval(EvalArgs),
    /// Sweep corruption levels and methods, or run the property suite.
    Bench(BenchArgs),
}

#[derive(Subcommand)]
enum SynthKind {
    /// Points on a line through the origin, some with one coordinate replaced.
    Line {
        #[arg(long, default_value_t = 180)]
        n: usize,
        #[arg(long, default_value_t = 0.2)]
        slope: f64,
        #[arg(long, default_value_t = 0)]
        outliers: usize,
        #[arg(long, value_enum, default_value_t = AxisArg::Both)]
        axis: AxisArg,
        #[arg(long, default_value_t = LINE_X_MAX)]
        x_max: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Product of two uniform random factors.
    Lowrank {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        rank: usize,
        /// Group the coefficient columns into this many clusters and write labels.csv.
        #[arg(long)]
        clusters: Option<usize>,
        #[arg(long, default_value_t = 0.05)]
        spread: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    X,
    Y,
    Both,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CorruptionKindArg {
    SaltPepper,
    Laplace,
    Block,
}

impl CorruptionKindArg {
    pub fn name(self) -> &'static str {
        match self {
            CorruptionKindArg::SaltPepper => "salt-pepper",
            CorruptionKindArg::Laplace => "laplace",
            CorruptionKindArg::Block => "block",
        }
    }
}

#[derive(clap::Args)]
struct CorruptArgs {
    /// Matrix CSV or a directory of PGM images.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    kind: CorruptionKindArg,
    /// Fraction of entries per column for salt-pepper.
    #[arg(long)]
    p: Option<f64>,
    /// Laplace scale.
    #[arg(long)]
    delta: Option<f64>,
    /// Block side length.
    #[arg(long)]
    b: Option<usize>,
    /// Image height x width, e.g. 32x32.
    #[arg(long, value_parser = parse_shape)]
    image_shape: Option<(usize, usize)>,
    #[arg(long, default_value_t = DEFAULT_BLOCK_FILL)]
    fill: f64,
    #[arg(long, default_value_t = DEFAULT_PEPPER)]
    low: f64,
    #[arg(long, default_value_t = DEFAULT_SALT)]
    high: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(clap::Args)]
struct FactorizeArgs {
    /// Matrix CSV or a directory of PGM images.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = Method::TruncatedCauchy)]
    method: Method,
    #[arg(long)]
    rank: usize,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(clap::Args)]
struct EvalArgs {
    /// Coefficient matrix, one column per sample.
    #[arg(long)]
    h: PathBuf,
    /// Ground-truth labels, one per line.
    #[arg(long)]
    labels: PathBuf,
    /// Number of clusters (default: number of distinct labels).
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    #[arg(long, default_value_t = KMEANS_RESTARTS)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Clean matrix for the relative reconstruction error (needs --w).
    #[arg(long, requires = "w")]
    clean: Option<PathBuf>,
    #[arg(long, requires = "clean")]
    w: Option<PathBuf>,
    #[arg(long, default_value = "report.json")]
    out: PathBuf,
}

#[derive(clap::Args)]
struct BenchArgs {
    /// Run the property suite instead of a corruption sweep.
    #[arg(long)]
    suite: bool,
    #[arg(long, value_enum, default_value_t = ScaleArg::Quick)]
    scale: ScaleArg,
    #[arg(long, value_enum, default_value_t = CorruptionKindArg::SaltPepper)]
    kind: CorruptionKindArg,
    /// Comma-separated corruption levels (fraction, Laplace scale or block size).
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.3, 0.5])]
    levels: Vec<f64>,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [Method::L2, Method::TruncatedCauchy])]
    methods: Vec<Method>,
    #[arg(long, default_value_t = 1)]
    trials: usize,
    #[arg(long, default_value_t = 4)]
    rank: usize,
    /// Clusters in the data (default: rank, or distinct labels for --input).
    #[arg(long)]
    clusters: Option<usize>,
    /// Matrix CSV or PGM directory; synthetic clustered data when absent.
    #[arg(long, requires = "labels")]
    input: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long, value_parser = parse_shape)]
    image_shape: Option<(usize, usize)>,
    #[arg(long, default_value_t = 64)]
    m: usize,
    #[arg(long, default_value_t = 60)]
    n: usize,
    #[arg(long, default_value_t = 0.05)]
    spread: f64,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScaleArg {
    Quick,
    Full,
}

fn parse_shape(s: &str) -> Result<(usize, usize), String> {
    let (h, w) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected HxW, got {s:?}"))?;
    let h: usize = h
        .trim()
        .parse()
        .map_err(|_| format!("bad height in {s:?}"))?;
    let w: usize = w
        .trim()
        .parse()
        .map_err(|_| format!("bad width in {s:?}"))?;
    if h == 0 || w == 0 {
        return Err(format!("image shape must be positive, got {s:?}"));
    }
    Ok((h, w))
}

fn usage_error(msg: impl std::fmt::Display) -> ! {
    Cli::command()
        .error(clap::error::ErrorKind::MissingRequiredArgument, msg)
        .exit()
}

fn ensure_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Matrix from a CSV file, or from a directory of PGM images (one column
/// per image) together with the image shape.
fn load_input(path: &Path) -> anyhow::Result<(DenseMatrix, Option<(usize, usize)>)> {
    if path.is_dir() {
        let (v, shape) = load_pgm_dir(path)?;
        Ok((v, Some(shape)))
    } else {
        Ok((read_matrix_csv(path)?, None))
    }
}

fn configure_threads() -> anyhow::Result<()> {
    let Ok(raw) = std::env::var("RNMF_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .with_context(|| format!("RNMF_THREADS must be a non-negative integer, got {raw:?}"))?;
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("configuring the worker pool")?;
    }
    Ok(())
}

fn cmd_synth(kind: SynthKind) -> anyhow::Result<()> {
    match kind {
        SynthKind::Line {
            n,
            slope,
            outliers,
            axis,
            x_max,
            seed,
            out,
        } => {
            let spec = SyntheticLineSpec {
                n_points: n,
                slope,
                n_outliers: outliers,
                outlier_axis: match axis {
                    AxisArg::X => OutlierAxis::X,
                    AxisArg::Y => OutlierAxis::Y,
                    AxisArg::Both => OutlierAxis::Both,
                },
                seed,
                x_max,
            };
            let d = gen_line(&spec)?;
            ensure_dir(&out)?;
            write_matrix_csv(out.join("V.csv"), &d.v)?;
            write_matrix_csv(out.join("clean.csv"), &d.clean)?;
            write_index_list(out.join("outliers.csv"), &d.outlier_indices)?;
        }
        SynthKind::Lowrank {
            m,
            n,
            rank,
            clusters,
            spread,
            seed,
            out,
        } => {
            ensure_dir(&out)?;
            let v = match clusters {
                Some(k) => {
                    let c = gen_clustered(m, n, rank, k, spread, seed)?;
                    write_index_list(out.join("labels.csv"), &c.labels)?;
                    c.v
                }
                None => gen_lowrank(m, n, rank, seed)?.v,
            };
            write_matrix_csv(out.join("V.csv"), &v)?;
            write_matrix_csv(out.join("clean.csv"), &v)?;
            write_index_list(out.join("outliers.csv"), &[])?;
        }
    }
    Ok(())
}

fn cmd_corrupt(args: CorruptArgs) -> anyhow::Result<()> {
    let kind = match args.kind {
        CorruptionKindArg::SaltPepper => CorruptionKind::SaltPepper {
            fraction: args
                .p
                .unwrap_or_else(|| usage_error("--kind salt-pepper requires --p")),
            low: args.low,
            high: args.high,
        },
        CorruptionKindArg::Laplace => CorruptionKind::Laplace {
            scale: args
                .delta
                .unwrap_or_else(|| usage_error("--kind laplace requires --delta")),
        },
        CorruptionKindArg::Block => CorruptionKind::Block {
            size: args
                .b
                .unwrap_or_else(|| usage_error("--kind block requires --b")),
            fill: args.fill,
        },
    };
    let (v, pgm_shape) = load_input(&args.input)?;
    let shape = args.image_shape.or(pgm_shape);
    if args.kind == CorruptionKindArg::Block && shape.is_none() {
        usage_error("--kind block requires --image-shape HxW");
    }
    let c = corrupt(
        &v,
        &CorruptionSpec {
            kind,
            seed: args.seed,
        },
        shape,
    )?;
    ensure_dir(&args.out)?;
    write_matrix_csv(args.out.join("V.csv"), &c.v)?;
    write_mask_csv(args.out.join("mask.csv"), &c.mask)?;
    Ok(())
}

#[derive(Serialize)]
struct Meta {
    method: Method,
    input: String,
    shape: [usize; 2],
    config: serde_json::Value,
    termination: Termination,
    outer_iterations: usize,
    final_objective: Option<f64>,
    runtime_secs: f64,
    threads: usize,
}

fn cmd_factorize(args: FactorizeArgs) -> anyhow::Result<()> {
    let (v, _) = load_input(&args.input)?;
    let start = Instant::now();
    let out = run_method(&v, args.method, args.rank, &args.solver)?;
    let runtime_secs = start.elapsed().as_secs_f64();
    ensure_dir(&args.out)?;
    write_matrix_csv(args.out.join("W.csv"), &out.w)?;
    write_matrix_csv(args.out.join("H.csv"), &out.h)?;
    let trace_path = args.out.join("trace.csv");
    fs::write(&trace_path, trace_csv(&out.records))
        .with_context(|| format!("writing {}", trace_path.display()))?;
    let meta = Meta {
        method: args.method,
        input: args.input.display().to_string(),
        shape: [v.rows(), v.cols()],
        config: out.config,
        termination: out.termination,
        outer_iterations: out.records.len(),
        final_objective: out.records.last().map(|r| r.objective),
        runtime_secs,
        threads: rayon::current_num_threads(),
    };
    write_json(args.out.join("meta.json"), &meta)?;
    Ok(())
}

fn distinct(labels: &[usize]) -> usize {
    let mut l = labels.to_vec();
    l.sort_unstable();
    l.dedup();
    l.len()
}

fn cmd_eval(args: EvalArgs) -> anyhow::Result<()> {
    let h = read_matrix_csv(&args.h)?;
    let labels = read_index_list(&args.labels)?;
    let k = args.k.unwrap_or_else(|| distinct(&labels));
    let err = match (&args.clean, &args.w) {
        (Some(clean), Some(w)) => Some(rel_error(
            &read_matrix_csv(clean)?,
            &read_matrix_csv(w)?,
            &h,
        )?),
        _ => None,
    };
    let report = cluster_report(&h, &labels, k, args.trials, args.restarts, args.seed, err)?;
    write_json(&args.out, &report)?;
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> anyhow::Result<()> {
    if args.suite {
        let scale = match args.scale {
            ScaleArg::Quick => Scale::Quick,
            ScaleArg::Full => Scale::Full,
        };
        let report = run_suite(args.solver.seed, scale);
        let out = args.out.unwrap_or_else(|| PathBuf::from("suite.json"));
        write_json(&out, &report)?;
        for r in report.results.iter().filter(|r| !r.pass) {
            eprintln!(
                "failed: {} (discrepancy {:e}, tolerance {:e})",
                r.property, r.discrepancy, r.tolerance
            );
        }
        eprintln!("suite: {} passed, {} failed", report.passed, report.failed);
        return Ok(());
    }
    let source = match (&args.input, &args.labels) {
        (Some(input), Some(labels)) => {
            let (v, pgm_shape) = load_input(input)?;
            let labels = read_index_list(labels)?;
            if labels.len() != v.cols() {
                bail!("{} labels for {} columns", labels.len(), v.cols());
            }
            Source::Fixed(bench::Dataset {
                v,
                labels,
                image_shape: args.image_shape.or(pgm_shape),
            })
        }
        _ => Source::Synthetic(Synthetic {
            m: args.m,
            n: args.n,
            spread: args.spread,
        }),
    };
    let image_shape = match &source {
        Source::Fixed(d) => d.image_shape,
        Source::Synthetic(_) => args.image_shape,
    };
    if args.kind == CorruptionKindArg::Block && image_shape.is_none() {
        usage_error("--kind block requires --image-shape HxW");
    }
    if let (Source::Synthetic(s), Some((h, w))) = (&source, image_shape) {
        if h * w != s.m {
            bail!("image shape {h}x{w} does not match --m {}", s.m);
        }
    }
    let clusters = args.clusters.unwrap_or(match &source {
        Source::Fixed(d) => distinct(&d.labels),
        Source::Synthetic(_) => args.rank,
    });
    let grid = Grid {
        kind: args.kind,
        levels: args.levels,
        methods: args.methods,
        trials: args.trials,
        rank: args.rank,
        clusters,
        solver: args.solver,
    };
    let csv = bench::run_grid(&source, &grid, image_shape)?;
    match args.out {
        Some(path) => {
            fs::write(&path, csv).with_context(|| format!("writing {}", path.display()))?
        }
        None => print!("{csv}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match cli.command {
        Command::Synth { kind } => cmd_synth(kind),
        Command::Corrupt(args) => cmd_corrupt(args),
        Command::Factorize(args) => cmd_factorize(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Bench(args) => cmd_bench(args),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
