//! Clustering and reconstruction metrics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::rng::Rng;

pub const KMEANS_RESTARTS: usize = 10;
pub const KMEANS_MAX_ITER: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct KmeansResult {
    pub labels: Vec<usize>,
    pub inertia: f64,
    /// Inertia after each assignment step of the winning restart.
    pub history: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn seed_centers(points: &[Vec<f64>], k: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centers = vec![points[rng.below(n)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.uniform() * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if acc > target && d > 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            rng.below(n)
        };
        let c = points[next].clone();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
        centers.push(c);
    }
    centers
}

fn assign(points: &[Vec<f64>], centers: &[Vec<f64>], labels: &mut [usize]) -> (f64, bool) {
    let mut inertia = 0.0;
    let mut changed = false;
    for (p, l) in points.iter().zip(labels.iter_mut()) {
        let (best, d) = centers
            .iter()
            .enumerate()
            .map(|(c, center)| (c, sq_dist(p, center)))
            .fold(
                (0, f64::INFINITY),
                |acc, x| if x.1 < acc.1 { x } else { acc },
            );
        inertia += d;
        if *l != best {
            *l = best;
            changed = true;
        }
    }
    (inertia, changed)
}

fn lloyd(points: &[Vec<f64>], k: usize, max_iter: usize, rng: &mut Rng) -> KmeansResult {
    let dim = points[0].len();
    let mut centers = seed_centers(points, k, rng);
    let mut labels = vec![usize::MAX; points.len()];
    let mut history = Vec::new();
    for _ in 0..max_iter {
        let (inertia, changed) = assign(points, &centers, &mut labels);
        history.push(inertia);
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            for (s, x) in sums[l].iter_mut().zip(p) {
                *s += x;
            }
        }
        for c in 0..k {
            // An emptied cluster keeps its previous center.
            if counts[c] > 0 {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
    }
    KmeansResult {
        inertia: *history.last().unwrap_or(&0.0),
        labels,
        history,
    }
}

/// Best-inertia k-means over seeded k-means++ restarts; points are the
/// columns of `h`.
pub fn kmeans_detailed(
    h: &DenseMatrix,
    k: usize,
    restarts: usize,
    seed: u64,
) -> Result<KmeansResult> {
    let n = h.cols();
    if k == 0 || k > n {
        return Err(Error::InvalidConfig(format!(
            "k must be in 1..={n}, got {k}"
        )));
    }
    let points: Vec<Vec<f64>> = (0..n).map(|j| h.column(j)).collect();
    let runs: Vec<KmeansResult> = (0..restarts.max(1))
        .into_par_iter()
        .map(|r| lloyd(&points, k, KMEANS_MAX_ITER, &mut Rng::child(seed, r as u64)))
        .collect();
    Ok(runs
        .into_iter()
        .reduce(|best, r| if r.inertia < best.inertia { r } else { best })
        .expect("at least one restart"))
}

pub fn kmeans(h: &DenseMatrix, k: usize, restarts: usize, seed: u64) -> Result<Vec<usize>> {
    Ok(kmeans_detailed(h, k, restarts, seed)?.labels)
}

/// Minimum-cost perfect assignment on a square cost matrix (shortest
/// augmenting paths with potentials). Returns the column assigned to each
/// row.
pub fn min_cost_assignment(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut col0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[col0] = true;
            let r0 = owner[col0];
            let mut delta = f64::INFINITY;
            let mut col1 = 0;
            for col in 1..=n {
                if used[col] {
                    continue;
                }
                let cur = cost[r0 - 1][col - 1] - u[r0] - v[col];
                if cur < minv[col] {
                    minv[col] = cur;
                    way[col] = col0;
                }
                if minv[col] < delta {
                    delta = minv[col];
                    col1 = col;
                }
            }
            for col in 0..=n {
                if used[col] {
                    u[owner[col]] += delta;
                    v[col] -= delta;
                } else {
                    minv[col] -= delta;
                }
            }
            col0 = col1;
            if owner[col0] == 0 {
                break;
            }
        }
        loop {
            let prev = way[col0];
            owner[col0] = owner[prev];
            col0 = prev;
            if col0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for col in 1..=n {
        if owner[col] > 0 {
            assignment[owner[col] - 1] = col - 1;
        }
    }
    assignment
}

fn relabel(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut ids: Vec<usize> = labels.to_vec();
    ids.sort_unstable();
    ids.dedup();
    let dense = labels
        .iter()
        .map(|l| ids.binary_search(l).expect("present"))
        .collect();
    (dense, ids.len())
}

fn contingency(pred: &[usize], truth: &[usize]) -> Result<Vec<Vec<usize>>> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch {
            what: "labelings",
            expected: truth.len(),
            got: pred.len(),
        });
    }
    let (p, kp) = relabel(pred);
    let (t, kt) = relabel(truth);
    let mut table = vec![vec![0usize; kt]; kp];
    for (a, b) in p.into_iter().zip(t) {
        table[a][b] += 1;
    }
    Ok(table)
}

/// Fraction of agreeing labels under the best one-to-one matching of
/// predicted to true clusters.
pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = contingency(pred, truth)?;
    let n = pred.len();
    if n == 0 {
        return Ok(1.0);
    }
    let size = table.len().max(table[0].len());
    let max = n as f64;
    let cost: Vec<Vec<f64>> = (0..size)
        .map(|i| {
            (0..size)
                .map(|j| max - table.get(i).and_then(|r| r.get(j)).copied().unwrap_or(0) as f64)
                .collect()
        })
        .collect();
    let matched: usize = min_cost_assignment(&cost)
        .into_iter()
        .enumerate()
        .map(|(i, j)| table.get(i).and_then(|r| r.get(j)).copied().unwrap_or(0))
        .sum();
    Ok(matched as f64 / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NmiNorm {
    #[default]
    Geometric,
    Arithmetic,
}

fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

pub fn nmi(pred: &[usize], truth: &[usize]) -> Result<f64> {
    nmi_with(pred, truth, NmiNorm::Geometric)
}

pub fn nmi_with(pred: &[usize], truth: &[usize], norm: NmiNorm) -> Result<f64> {
    let table = contingency(pred, truth)?;
    let n = pred.len() as f64;
    if pred.is_empty() {
        return Ok(1.0);
    }
    let rows: Vec<usize> = table.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<usize> = (0..table[0].len())
        .map(|j| table.iter().map(|r| r[j]).sum())
        .collect();
    let hp = entropy(rows.iter().copied(), n);
    let ht = entropy(cols.iter().copied(), n);
    if hp == 0.0 || ht == 0.0 {
        return Ok(if hp == ht { 1.0 } else { 0.0 });
    }
    let mut mi = 0.0;
    for (i, row) in table.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c > 0 {
                let c = c as f64;
                mi += c / n * (c * n / (rows[i] as f64 * cols[j] as f64)).ln();
            }
        }
    }
    let denom = match norm {
        NmiNorm::Geometric => (hp * ht).sqrt(),
        NmiNorm::Arithmetic => 0.5 * (hp + ht),
    };
    Ok((mi / denom).clamp(0.0, 1.0))
}

/// `||V_clean - W H||_F / ||V_clean||_F`.
pub fn rel_error(v_clean: &DenseMatrix, w: &DenseMatrix, h: &DenseMatrix) -> Result<f64> {
    let denom = v_clean.frobenius_norm();
    if denom == 0.0 {
        return Err(Error::ZeroMatrix("clean matrix"));
    }
    Ok(v_clean.sub(&w.matmul(h)?)?.frobenius_norm() / denom)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialScore {
    pub accuracy: f64,
    pub nmi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub accuracy: f64,
    pub accuracy_std: f64,
    pub nmi: f64,
    pub nmi_std: f64,
    pub rel_error: Option<f64>,
    pub trials: usize,
    pub per_trial: Vec<TrialScore>,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Repeats k-means on the columns of `h` for `trials` derived seeds and
/// scores each labeling against `truth`.
pub fn cluster_report(
    h: &DenseMatrix,
    truth: &[usize],
    k: usize,
    trials: usize,
    restarts: usize,
    seed: u64,
    rel_error: Option<f64>,
) -> Result<ClusterReport> {
    if truth.len() != h.cols() {
        return Err(Error::LengthMismatch {
            what: "truth labels vs columns",
            expected: h.cols(),
            got: truth.len(),
        });
    }
    if trials == 0 {
        return Err(Error::InvalidConfig("trials must be positive".into()));
    }
    let mut per_trial = Vec::with_capacity(trials);
    for t in 0..trials {
        let mut rng = Rng::child(seed, t as u64);
        let labels = kmeans(h, k, restarts, rand::RngCore::next_u64(&mut rng))?;
        per_trial.push(TrialScore {
            accuracy: accuracy(&labels, truth)?,
            nmi: nmi(&labels, truth)?,
        });
    }
    let acc: Vec<f64> = per_trial.iter().map(|s| s.accuracy).collect();
    let nm: Vec<f64> = per_trial.iter().map(|s| s.nmi).collect();
    let (accuracy, accuracy_std) = mean_std(&acc);
    let (nmi, nmi_std) = mean_std(&nm);
    Ok(ClusterReport {
        accuracy,
        accuracy_std,
        nmi,
        nmi_std,
        rel_error,
        trials,
        per_trial,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kmeans_separates_far_groups() {
        let h = DenseMatrix::from_rows(&[
            vec![0.0, 0.1, 0.2, 100.0, 100.1, 100.2],
            vec![0.0, 0.2, 0.1, 50.0, 50.1, 50.2],
        ])
        .unwrap();
        let l = kmeans(&h, 2, 3, 1).unwrap();
        assert_eq!(l[0], l[1]);
        assert_eq!(l[1], l[2]);
        assert_eq!(l[3], l[4]);
        assert_eq!(l[4], l[5]);
        assert_ne!(l[0], l[3]);
    }

    #[test]
    fn kmeans_k_equals_n() {
        let h = DenseMatrix::from_rows(&[vec![0.0, 1.0, 3.0, 7.0]]).unwrap();
        let r = kmeans_detailed(&h, 4, 2, 5).unwrap();
        assert_eq!(r.inertia, 0.0);
        let mut l = r.labels.clone();
        l.sort_unstable();
        l.dedup();
        assert_eq!(l.len(), 4);
        assert!(kmeans(&h, 5, 1, 0).is_err());
    }

    #[test]
    fn kmeans_inertia_never_rises() {
        let mut rng = Rng::new(3);
        let h = DenseMatrix::from_fn(3, 200, |_, _| rng.uniform());
        let r = kmeans_detailed(&h, 6, 4, 9).unwrap();
        for pair in r.history.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-12);
        }
    }

    #[test]
    fn accuracy_examples() {
        let truth = vec![0, 0, 1, 1, 2, 2];
        assert_eq!(accuracy(&truth, &truth).unwrap(), 1.0);
        assert_eq!(accuracy(&[5, 5, 3, 3, 9, 9], &truth).unwrap(), 1.0);
        assert!((accuracy(&[0; 6], &truth).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(accuracy(&[0; 5], &truth).is_err());
    }

    #[test]
    fn assignment_matches_brute_force() {
        let mut rng = Rng::new(8);
        for _ in 0..50 {
            let n = 1 + rng.below(5);
            let cost: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..n).map(|_| rng.uniform()).collect())
                .collect();
            let a = min_cost_assignment(&cost);
            let got: f64 = a.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
            let mut perm: Vec<usize> = (0..n).collect();
            let mut best = f64::INFINITY;
            permute(&mut perm, 0, &mut |p| {
                best = best.min(p.iter().enumerate().map(|(i, &j)| cost[i][j]).sum());
            });
            assert!((got - best).abs() < 1e-12);
        }
    }

    fn permute(p: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize])) {
        if k == p.len() {
            f(p);
            return;
        }
        for i in k..p.len() {
            p.swap(k, i);
            permute(p, k + 1, f);
            p.swap(k, i);
        }
    }

    #[test]
    fn nmi_examples() {
        let truth = vec![0, 0, 1, 1, 2, 2];
        assert!((nmi(&truth, &truth).unwrap() - 1.0).abs() < 1e-12);
        assert!((nmi(&[2, 2, 0, 0, 1, 1], &truth).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(nmi(&[0; 6], &truth).unwrap(), 0.0);
        assert_eq!(nmi(&[0; 6], &[1; 6]).unwrap(), 1.0);
        let a = nmi_with(&[0, 0, 1, 1, 1, 2], &truth, NmiNorm::Arithmetic).unwrap();
        assert!(a > 0.0 && a < 1.0);

        let mut rng = Rng::new(4);
        let x: Vec<usize> = (0..20_000).map(|_| rng.below(5)).collect();
        let y: Vec<usize> = (0..20_000).map(|_| rng.below(5)).collect();
        assert!(nmi(&x, &y).unwrap() < 0.05);
    }

    #[test]
    fn rel_error_examples() {
        let v = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let w = DenseMatrix::identity(2);
        assert_eq!(rel_error(&v, &w, &v).unwrap(), 0.0);
        assert_eq!(rel_error(&v, &DenseMatrix::zeros(2, 2), &v).unwrap(), 1.0);
        let h = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 5.0]]).unwrap();
        assert!((rel_error(&v, &w, &h).unwrap() - 1.0 / 30f64.sqrt()).abs() < 1e-12);
        assert!(matches!(
            rel_error(&DenseMatrix::zeros(2, 2), &w, &v),
            Err(Error::ZeroMatrix(_))
        ));
    }

    #[test]
    fn report_has_one_entry_per_trial() {
        let h = DenseMatrix::from_rows(&[vec![0.0, 0.1, 10.0, 10.1]]).unwrap();
        let r = cluster_report(&h, &[1, 1, 0, 0], 2, 10, 2, 3, None).unwrap();
        assert_eq!(r.per_trial.len(), 10);
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.nmi, 1.0);
        assert!(cluster_report(&h, &[1, 1, 0], 2, 1, 1, 0, None).is_err());
    }
}
