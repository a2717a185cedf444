use longpeer::dataset::{
    parse_dataset, write_curves, write_outcomes, FunctionalRecord, LongitudinalDataset,
    RandomEffectSpec, SampleGrid,
};
use longpeer::estimator::{blup_with, ridge_solve_with, DenseCovariance};
use longpeer::linalg::gsvd_pair;
use longpeer::penalty::{
    make_decomposition, make_ridge, parse_q_basis, write_q_basis, BlockPenalty,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-1.0f64..1.0, rows * cols)
        .prop_map(move |v| DMatrix::from_vec(rows, cols, v))
}

/// `(n, p̃, m)` with `n ≤ p̃`, `m ≤ p̃ ≤ n + m`.
fn gsvd_shape() -> impl Strategy<Value = (usize, usize, usize)> {
    (1usize..7, 0usize..5).prop_flat_map(|(n, extra)| {
        let p = n + extra;
        (Just(n), Just(p), extra.max(1)..=p)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gsvd_reconstructs_random_pairs(((n, p, m), seed) in (gsvd_shape(), any::<u64>())) {
        let mut state = seed;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        let a = DMatrix::from_fn(n, p, |_, _| next());
        let b = DMatrix::from_fn(m, p, |_, _| next());
        let f = gsvd_pair(&a, &b).unwrap();
        let ra = &f.u * f.s_matrix() * &f.g_inv;
        let rb = &f.v * f.m_matrix() * &f.g_inv;
        prop_assert!((ra - &a).norm() <= 1e-10 * a.norm().max(1.0));
        prop_assert!((rb - &b).norm() <= 1e-10 * b.norm().max(1.0));
        for (s, mu) in f.sigma.iter().zip(&f.mu) {
            prop_assert!((s * s + mu * mu - 1.0).abs() < 1e-12);
        }
        prop_assert!(f.sigma.windows(2).all(|w| w[0] <= w[1] + 1e-14));
    }

    #[test]
    fn decomposition_spectrum(q in matrix(6, 2), phi_a in 0.01f64..100.0, phi_b in 0.01f64..100.0) {
        prop_assume!(q.clone().svd(false, false).singular_values.min() > 1e-3);
        let l = make_decomposition(&q, phi_a, phi_b).unwrap().l;
        let mut eig: Vec<f64> = l.symmetric_eigen().eigenvalues.iter().copied().collect();
        eig.sort_by(f64::total_cmp);
        let mut want = vec![phi_b, phi_b, phi_a, phi_a, phi_a, phi_a];
        want.sort_by(f64::total_cmp);
        for (g, w) in eig.iter().zip(&want) {
            prop_assert!((g - w).abs() <= 1e-9 * phi_a.max(phi_b));
        }
    }

    #[test]
    fn ridge_and_mixed_model_agree(
        w in matrix(9, 5),
        x in matrix(9, 1),
        y in prop::collection::vec(-3.0f64..3.0, 9),
        lambda in 0.05f64..20.0,
        a in matrix(9, 9),
    ) {
        let v = &a * a.transpose() + DMatrix::identity(9, 9);
        let cov = DenseCovariance::new(v).unwrap();
        let bp = BlockPenalty::assemble(&[make_ridge(5)], &[lambda]).unwrap();
        let y = DVector::from_vec(y);
        let direct = ridge_solve_with(&x, &w, &y, &bp.gram, &cov).unwrap();
        let (mixed, _) = blup_with(&x, &w, &y, &bp.gram, bp.gram_inverse.as_ref().unwrap(), &cov).unwrap();
        prop_assert!((&direct.gamma - &mixed.gamma).norm() <= 1e-9 * direct.gamma.norm().max(1e-3));
        prop_assert!((&direct.beta - &mixed.beta).norm() <= 1e-9 * direct.beta.norm().max(1e-3));
    }

    #[test]
    fn q_basis_round_trips(q in matrix(7, 3)) {
        let mut buf = Vec::new();
        write_q_basis(&q, &mut buf).unwrap();
        let back = parse_q_basis(buf.as_slice()).unwrap();
        prop_assert_eq!(back, q);
    }

    #[test]
    fn dataset_round_trips(
        ys in prop::collection::vec(-1e3f64..1e3, 6),
        ws in prop::collection::vec(-10.0f64..10.0, 24),
    ) {
        let records: Vec<FunctionalRecord> = (0..6)
            .map(|k| FunctionalRecord {
                subject: format!("id{}", k / 2),
                t: (k % 2) as f64 * 0.5,
                y: ys[k],
                x: vec![],
                w: ws[k * 4..k * 4 + 4].to_vec(),
            })
            .collect();
        let grid = SampleGrid::equispaced(4).unwrap();
        let ds = LongitudinalDataset::new(grid.clone(), vec![], records, RandomEffectSpec::default()).unwrap();
        let (mut out, mut cur) = (Vec::new(), Vec::new());
        write_outcomes(&ds, &mut out).unwrap();
        write_curves(&ds, &mut cur).unwrap();
        let back = parse_dataset(out.as_slice(), cur.as_slice(), grid, RandomEffectSpec::default()).unwrap();
        prop_assert_eq!(back.records(), ds.records());
    }
}
