mod common;

use rnmf_core::wnls::{solve_wnls, solve_wnls_with, OgmOptions, WnlsProblem};
use rnmf_core::{DenseMatrix, Rng};

#[test]
fn ogm_matches_exhaustive_active_set() {
    let mut rng = Rng::new(2024);
    let (mut worst_tight, mut worst_default): (f64, f64) = (0.0, 0.0);
    let tight = OgmOptions {
        eps1: 1e-12,
        max_iter: 50_000,
        relative_floor: 0.0,
    };
    for _ in 0..500 {
        let r = 1 + rng.below(3);
        let m = r + rng.below(7 - r);
        let w = DenseMatrix::from_fn(m, r, |_, _| rng.uniform());
        let d: Vec<f64> = (0..m).map(|_| rng.uniform_range(0.05, 1.0)).collect();
        let v: Vec<f64> = (0..m).map(|_| rng.uniform_range(-0.5, 2.0)).collect();
        let h0: Vec<f64> = (0..r).map(|_| rng.uniform()).collect();
        let p = WnlsProblem::new(&w, &d, &v, &h0).unwrap();
        let (_, f_star) = common::active_set_oracle(&w, &d, &v);
        let (h, _) = solve_wnls_with(&p, &tight).unwrap();
        worst_tight = worst_tight.max((p.objective(&h) - f_star).abs());
        let (h, _) = solve_wnls(&p, 1e-6, 500).unwrap();
        worst_default = worst_default.max(p.objective(&h) - f_star);
    }
    eprintln!("worst gap tight {worst_tight:e} default {worst_default:e}");
    assert!(worst_tight <= 1e-6);
}
