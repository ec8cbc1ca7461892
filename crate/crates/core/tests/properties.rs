mod common;

use fockphase::engine::{phase_integrate, phase_phi2_closed_form, QuadraticGenerator};
use fockphase::linalg::to_complex;
use fockphase::lowrank::{rank1_d, RankOneGenerator};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn symmetric(n: usize, vals: &[f64]) -> DMatrix<f64> {
    let m = DMatrix::from_fn(n, n, |i, j| vals[i * n + j]);
    (&m + m.transpose()) * 0.25
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn closed_form_matches_ode(n in 1usize..5, vals in prop::collection::vec(-1.0f64..1.0, 16), lam in 0.0f64..1.0, dk in 0.2f64..1.5) {
        let f = symmetric(n, &vals);
        let g = QuadraticGenerator::phi_squared(&f, dk).unwrap();
        let ode = phase_integrate(&g, lam).unwrap().d;
        let closed = phase_phi2_closed_form(&to_complex(&f), lam, dk).unwrap();
        prop_assert!((ode - closed).norm() <= 1e-8, "{} vs {}", ode, closed);
    }

    #[test]
    fn amplitude_has_modulus_at_most_one(seed in 0u64..1000, lam in -1.0f64..1.0) {
        let g = common::random_generator(&mut common::rng(seed), 2, 0.5, 1.0);
        let a = phase_integrate(&g, lam).unwrap().vacuum_amplitude();
        prop_assert!(a.norm() <= 1.0 + 1e-10);
    }

    #[test]
    fn reversed_coupling_conjugates_phi_squared(vals in prop::collection::vec(-1.0f64..1.0, 9), lam in 0.0f64..1.0) {
        let f = symmetric(3, &vals);
        let g = QuadraticGenerator::phi_squared(&f, 0.7).unwrap();
        let p = phase_integrate(&g, lam).unwrap().d;
        let m = phase_integrate(&g, -lam).unwrap().d;
        prop_assert!((p - m.conj()).norm() <= 1e-9);
    }

    #[test]
    fn rank_one_closed_form_matches_dense(vals in prop::collection::vec(-1.0f64..1.0, 4), lam in 0.0f64..1.0) {
        let v = DVector::from_vec(vals);
        let dense = RankOneGenerator::from_real(&v, 0.5).to_dense().unwrap();
        let d = phase_integrate(&dense, lam).unwrap().d;
        prop_assert!((d - rank1_d(&v, lam, 0.5).unwrap()).norm() <= 1e-8);
    }
}
