//! Seeded synthetic data and corruption generators.
//!
//! Every column is generated from its own child stream of the seed, so a
//! column's content does not depend on how many columns precede it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::rng::Rng;

pub const DEFAULT_BLOCK_FILL: f64 = 550.0;
pub const DEFAULT_SALT: f64 = 255.0;
pub const DEFAULT_PEPPER: f64 = 0.0;
pub const LINE_X_MAX: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutlierAxis {
    X,
    Y,
    /// First half of the contaminated points on `x`, the rest on `y`.
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticLineSpec {
    pub n_points: usize,
    pub slope: f64,
    pub n_outliers: usize,
    pub outlier_axis: OutlierAxis,
    pub seed: u64,
    /// Inliers have `x ~ U(0, x_max)`; contaminated coordinates are redrawn
    /// from `U(0, 2 x_max)`.
    pub x_max: f64,
}

impl Default for SyntheticLineSpec {
    fn default() -> Self {
        SyntheticLineSpec {
            n_points: 180,
            slope: 0.2,
            n_outliers: 0,
            outlier_axis: OutlierAxis::Both,
            seed: 0,
            x_max: LINE_X_MAX,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LineData {
    /// 2 x n, one point per column.
    pub v: DenseMatrix,
    pub clean: DenseMatrix,
    /// Sorted column indices of the contaminated points.
    pub outlier_indices: Vec<usize>,
}

pub fn gen_line(spec: &SyntheticLineSpec) -> Result<LineData> {
    if spec.n_outliers > spec.n_points {
        return Err(Error::InvalidConfig(format!(
            "{} outliers requested for {} points",
            spec.n_outliers, spec.n_points
        )));
    }
    if !(spec.slope >= 0.0 && spec.x_max > 0.0) {
        return Err(Error::InvalidConfig(
            "line data needs slope >= 0 and x_max > 0".into(),
        ));
    }
    let n = spec.n_points;
    let mut rng = Rng::new(spec.seed);
    let xs: Vec<f64> = (0..n).map(|_| rng.uniform_range(0.0, spec.x_max)).collect();
    let clean = DenseMatrix::from_fn(2, n, |i, j| if i == 0 { xs[j] } else { spec.slope * xs[j] });
    let mut v = clean.clone();

    let mut outliers = rng.sample_indices(n, spec.n_outliers);
    for (k, &j) in outliers.iter().enumerate() {
        let row = match spec.outlier_axis {
            OutlierAxis::X => 0,
            OutlierAxis::Y => 1,
            OutlierAxis::Both => usize::from(k >= spec.n_outliers / 2),
        };
        v.set(row, j, rng.uniform_range(0.0, 2.0 * spec.x_max));
    }
    outliers.sort_unstable();
    Ok(LineData {
        v,
        clean,
        outlier_indices: outliers,
    })
}

#[derive(Debug, Clone)]
pub struct LowRank {
    pub v: DenseMatrix,
    pub w: DenseMatrix,
    pub h: DenseMatrix,
}

/// `V = W H` with `W` (m x r) and `H` (r x n) i.i.d. `U(0, 1)`.
pub fn gen_lowrank(m: usize, n: usize, r: usize, seed: u64) -> Result<LowRank> {
    if r == 0 || r > m.min(n) {
        return Err(Error::InvalidConfig(format!(
            "rank must be in 1..={} for {m}x{n}, got {r}",
            m.min(n)
        )));
    }
    let mut rng = Rng::new(seed);
    let w = DenseMatrix::from_fn(m, r, |_, _| rng.uniform());
    let h = DenseMatrix::from_fn(r, n, |_, _| rng.uniform());
    let v = w.matmul(&h)?;
    Ok(LowRank { v, w, h })
}

#[derive(Debug, Clone)]
pub struct Clustered {
    pub v: DenseMatrix,
    pub w: DenseMatrix,
    pub h: DenseMatrix,
    pub labels: Vec<usize>,
}

/// Low-rank data whose coefficient columns form `k` tight groups.
///
/// Each group has a random prototype in `[0, 1]^r`; members add `U(0, spread)`
/// jitter. Labels are balanced and shuffled.
pub fn gen_clustered(
    m: usize,
    n: usize,
    r: usize,
    k: usize,
    spread: f64,
    seed: u64,
) -> Result<Clustered> {
    if k == 0 || k > n {
        return Err(Error::InvalidConfig(format!(
            "need 1 <= k <= n, got k={k}, n={n}"
        )));
    }
    let base = gen_lowrank(m, n, r, seed)?;
    let mut rng = Rng::child(seed, 1);
    let protos = DenseMatrix::from_fn(r, k, |_, _| rng.uniform());
    let mut labels: Vec<usize> = (0..n).map(|j| j % k).collect();
    rng.shuffle(&mut labels);
    let h = DenseMatrix::from_fn(r, n, |i, j| {
        protos.get(i, labels[j]) + spread * rng.uniform()
    });
    let v = base.w.matmul(&h)?;
    Ok(Clustered {
        v,
        w: base.w,
        h,
        labels,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum CorruptionKind {
    Laplace { scale: f64 },
    SaltPepper { fraction: f64, low: f64, high: f64 },
    Block { size: usize, fill: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorruptionSpec {
    #[serde(flatten)]
    pub kind: CorruptionKind,
    pub seed: u64,
}

impl CorruptionSpec {
    pub fn laplace(scale: f64, seed: u64) -> Self {
        CorruptionSpec {
            kind: CorruptionKind::Laplace { scale },
            seed,
        }
    }

    pub fn salt_pepper(fraction: f64, seed: u64) -> Self {
        CorruptionSpec {
            kind: CorruptionKind::SaltPepper {
                fraction,
                low: DEFAULT_PEPPER,
                high: DEFAULT_SALT,
            },
            seed,
        }
    }

    pub fn block(size: usize, seed: u64) -> Self {
        CorruptionSpec {
            kind: CorruptionKind::Block {
                size,
                fill: DEFAULT_BLOCK_FILL,
            },
            seed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Corrupted {
    pub v: DenseMatrix,
    /// Corrupted `(row, col)` entries in row-major order.
    pub mask: Vec<(usize, usize)>,
}

/// Corrupts each column (one vectorized image per column, row-major pixels).
pub fn corrupt(
    v: &DenseMatrix,
    spec: &CorruptionSpec,
    image_shape: Option<(usize, usize)>,
) -> Result<Corrupted> {
    let (m, n) = v.shape();
    let mut out = v.clone();
    let mut mask = Vec::new();
    match spec.kind {
        CorruptionKind::Laplace { scale } => {
            if !(scale > 0.0 && scale.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "laplace scale must be positive, got {scale}"
                )));
            }
            for j in 0..n {
                let mut rng = Rng::child(spec.seed, j as u64);
                for i in 0..m {
                    out.set(i, j, (v.get(i, j) + rng.laplace(scale)).max(0.0));
                }
            }
            mask.extend((0..m).flat_map(|i| (0..n).map(move |j| (i, j))));
        }
        CorruptionKind::SaltPepper {
            fraction,
            low,
            high,
        } => {
            if !(0.0..=1.0).contains(&fraction) {
                return Err(Error::InvalidConfig(format!(
                    "fraction must be in [0, 1], got {fraction}"
                )));
            }
            if !(low >= 0.0 && high >= 0.0 && low.is_finite() && high.is_finite()) {
                return Err(Error::InvalidConfig(
                    "salt and pepper values must be finite and >= 0".into(),
                ));
            }
            let count = (fraction * m as f64).round() as usize;
            for j in 0..n {
                let mut rng = Rng::child(spec.seed, j as u64);
                for i in rng.sample_indices(m, count) {
                    out.set(i, j, if rng.coin() { high } else { low });
                    mask.push((i, j));
                }
            }
        }
        CorruptionKind::Block { size, fill } => {
            let (height, width) = image_shape.ok_or(Error::MissingParameter("image_shape"))?;
            if height * width != m {
                return Err(Error::InvalidConfig(format!(
                    "image shape {height}x{width} does not match {m} rows"
                )));
            }
            if size == 0 || size > height.min(width) {
                return Err(Error::InvalidConfig(format!(
                    "block size must be in 1..={}, got {size}",
                    height.min(width)
                )));
            }
            if !(fill >= 0.0 && fill.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "fill must be finite and >= 0, got {fill}"
                )));
            }
            for j in 0..n {
                let mut rng = Rng::child(spec.seed, j as u64);
                let top = rng.below(height - size + 1);
                let left = rng.below(width - size + 1);
                for y in top..top + size {
                    for x in left..left + size {
                        let i = y * width + x;
                        out.set(i, j, fill);
                        mask.push((i, j));
                    }
                }
            }
        }
    }
    mask.sort_unstable();
    Ok(Corrupted { v: out, mask })
}
