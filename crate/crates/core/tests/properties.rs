use proptest::prelude::*;
use rnmf_core::datagen::{corrupt, CorruptionSpec};
use rnmf_core::eval::{accuracy, nmi};
use rnmf_core::hq::{factorize, update_weights, weight_consistency_error, SolverConfig};
use rnmf_core::losses::{g, hq_weight, Sigma, WeightFunction};
use rnmf_core::wnls::{solve_wnls, WnlsProblem};
use rnmf_core::DenseMatrix;

fn matrix(rows: usize, cols: usize, lo: f64, hi: f64) -> impl Strategy<Value = DenseMatrix> {
    proptest::collection::vec(lo..hi, rows * cols)
        .prop_map(move |d| DenseMatrix::new(rows, cols, d).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hq_weight_is_reciprocal(x in 0.0f64..1e3, sigma in 1e-3f64..1e4) {
        let w = hq_weight(x, Sigma::Finite(sigma)).unwrap();
        if x <= sigma {
            prop_assert!((w * (1.0 + x) - 1.0).abs() <= f64::EPSILON);
        } else {
            prop_assert_eq!(w, 0.0);
        }
    }

    #[test]
    fn g_is_capped_and_monotone(a in 0.0f64..50.0, b in 0.0f64..50.0, sigma in 0.1f64..20.0) {
        let s = Sigma::Finite(sigma);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(g(lo, s).unwrap() <= g(hi, s).unwrap());
        prop_assert!(g(hi, s).unwrap() <= sigma.ln_1p());
    }

    #[test]
    fn cauchy_weights_decrease(e1 in 0.0f64..100.0, e2 in 0.0f64..100.0, gamma in 0.01f64..10.0) {
        let f = WeightFunction::cauchy(gamma);
        let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
        let (wl, wh) = (f.weight(lo).unwrap(), f.weight(hi).unwrap());
        prop_assert!(wh <= wl && wl <= 1.0 && wh > 0.0);
    }

    #[test]
    fn wnls_never_worsens_start(
        w in matrix(6, 3, 0.0, 1.0),
        d in proptest::collection::vec(0.0f64..2.0, 6),
        v in proptest::collection::vec(0.0f64..3.0, 6),
        h0 in proptest::collection::vec(0.0f64..2.0, 3),
    ) {
        let p = WnlsProblem::new(&w, &d, &v, &h0).unwrap();
        let (h, _) = solve_wnls(&p, 1e-6, 500).unwrap();
        prop_assert!(h.iter().all(|&x| x >= 0.0));
        prop_assert!(p.objective(&h) <= p.objective(&h0) * (1.0 + 1e-12) + 1e-15);
    }

    #[test]
    fn update_weights_zeroes_outliers(e in matrix(5, 4, -10.0, 10.0), gamma in 0.1f64..5.0, pick in 0usize..20) {
        let outliers = vec![(pick / 4, pick % 4)];
        let q = update_weights(&e, gamma, &outliers);
        prop_assert_eq!(q.get(pick / 4, pick % 4), 0.0);
        for i in 0..5 {
            for j in 0..4 {
                if (i, j) != outliers[0] {
                    let x = (e.get(i, j) / gamma).powi(2);
                    prop_assert_eq!(q.get(i, j), 1.0 / (1.0 + x));
                }
            }
        }
    }

    #[test]
    fn salt_pepper_only_touches_mask(v in matrix(30, 5, 1.0, 100.0), p in 0.0f64..1.0, seed in any::<u64>()) {
        let c = corrupt(&v, &CorruptionSpec::salt_pepper(p, seed), None).unwrap();
        let mut touched = vec![false; v.len()];
        for &(i, j) in &c.mask {
            touched[i * 5 + j] = true;
        }
        for (k, (a, b)) in v.as_slice().iter().zip(c.v.as_slice()).enumerate() {
            prop_assert!(touched[k] || a == b);
            prop_assert!(*b >= 0.0);
        }
        let again = corrupt(&v, &CorruptionSpec::salt_pepper(p, seed), None).unwrap();
        prop_assert_eq!(c.v, again.v);
    }

    #[test]
    fn metrics_ignore_label_names(
        truth in proptest::collection::vec(0usize..4, 40),
        pred in proptest::collection::vec(0usize..4, 40),
        shift in 1usize..4,
    ) {
        let renamed: Vec<usize> = pred.iter().map(|&p| (p + shift) % 4).collect();
        prop_assert!((accuracy(&pred, &truth).unwrap() - accuracy(&renamed, &truth).unwrap()).abs() < 1e-12);
        prop_assert!((nmi(&pred, &truth).unwrap() - nmi(&renamed, &truth).unwrap()).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn solver_state_is_consistent(v in matrix(12, 10, 0.0, 5.0), seed in any::<u64>()) {
        let mut cfg = SolverConfig::new(2).with_seed(seed);
        cfg.max_outer = 15;
        let f = factorize(&v, &cfg).unwrap();
        prop_assert_eq!(weight_consistency_error(&f.state), 0.0);
        prop_assert!(f.w.find_negative().is_none() && f.h.find_negative().is_none());
        for r in &f.state.records {
            prop_assert!(r.objective <= r.objective_start + 1e-8);
        }
    }
}
