//! Property tests for the preprocessing chain and the matrix kernel.

use proptest::prelude::*;

use spectral_risk::preprocess::{
    build_feature_vectors, l2_normalize, min_max, orient, Polarity, RawFeatureTable,
};
use spectral_risk::symmat::{
    eig, fidelity, fidelity_pure, sqrt_psd, trace_inner, DensityMatrix, SymMatrix,
};

fn finite_column() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0e6..1.0e6f64, 1..40)
}

fn random_sym(dim: usize) -> impl Strategy<Value = SymMatrix> {
    prop::collection::vec(-10.0..10.0f64, dim * dim)
        .prop_map(move |entries| SymMatrix::new(dim, entries).unwrap())
}

fn random_psd(dim: usize) -> impl Strategy<Value = SymMatrix> {
    prop::collection::vec(-3.0..3.0f64, dim * dim).prop_map(move |b| {
        // BBᵀ is PSD by construction
        let mut entries = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in 0..dim {
                let mut acc = 0.0;
                for k in 0..dim {
                    acc += b[i * dim + k] * b[j * dim + k];
                }
                entries[i * dim + j] = acc;
            }
        }
        SymMatrix::new(dim, entries).unwrap()
    })
}

fn random_density(dim: usize) -> impl Strategy<Value = DensityMatrix> {
    random_psd(dim).prop_filter_map("positive trace", |psd| {
        let trace = psd.trace();
        (trace > 1e-9).then(|| DensityMatrix::new(psd.scale(1.0 / trace)).unwrap())
    })
}

fn random_unit(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..1.0f64, dim).prop_filter_map("nonzero", |v| {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        (norm > 1e-6).then(|| v.iter().map(|x| x / norm).collect())
    })
}

proptest! {
    #[test]
    fn min_max_stays_in_unit_interval_and_preserves_order(column in finite_column()) {
        let scaled = min_max(&column);
        for &v in &scaled {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        for i in 0..column.len() {
            for j in 0..column.len() {
                if column[i] < column[j] {
                    prop_assert!(scaled[i] <= scaled[j]);
                }
            }
        }
    }

    #[test]
    fn min_max_idempotent_on_anchored_unit_columns(
        mut column in prop::collection::vec(0.0..=1.0f64, 2..30)
    ) {
        column[0] = 0.0;
        let last = column.len() - 1;
        column[last] = 1.0;
        let scaled = min_max(&column);
        for (a, b) in column.iter().zip(&scaled) {
            prop_assert!((a - b).abs() <= 1e-15);
        }
    }

    #[test]
    fn raising_a_raw_value_never_lowers_its_scaled_value(
        column in prop::collection::vec(-1.0e3..1.0e3f64, 2..30),
        idx in any::<prop::sample::Index>(),
        delta in 1e-6..1.0e3f64,
    ) {
        let i = idx.index(column.len());
        let before = min_max(&orient(&column, Polarity::HigherIsRiskier));
        let mut raised = column.clone();
        raised[i] += delta;
        let after = min_max(&orient(&raised, Polarity::HigherIsRiskier));
        prop_assert!(after[i] >= before[i] - 1e-12);
    }

    #[test]
    fn emitted_vectors_are_nonnegative_and_unit_or_zero(
        cols in prop::collection::vec(finite_column(), 1..4),
        ids_len in 2..25usize,
    ) {
        let n = ids_len;
        let ids: Vec<String> = (0..n).map(|i| format!("z{i}")).collect();
        let mut table = RawFeatureTable::new(ids);
        for (k, col) in cols.iter().enumerate() {
            let mut values = col.clone();
            values.resize(n, 0.0);
            table.add_column(format!("c{k}"), values, Polarity::HigherIsRiskier).unwrap();
        }
        let names: Vec<String> = (0..cols.len()).map(|k| format!("c{k}")).collect();
        let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
        let vectors = build_feature_vectors(&table, &name_refs).unwrap();
        for v in vectors {
            prop_assert!(v.components().iter().all(|&c| c >= 0.0));
            let norm = v.components().iter().map(|c| c * c).sum::<f64>().sqrt();
            if v.is_zero() {
                prop_assert_eq!(norm, 0.0);
            } else {
                prop_assert!((norm - 1.0).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn l2_normalize_output_is_unit_or_zero(v in prop::collection::vec(0.0..1.0e6f64, 1..10)) {
        let out = l2_normalize("x", &v).unwrap();
        let norm = out.components().iter().map(|c| c * c).sum::<f64>().sqrt();
        if out.is_zero() {
            prop_assert_eq!(norm, 0.0);
        } else {
            prop_assert!((norm - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn trace_inner_is_symmetric_and_bilinear(
        p in random_sym(3),
        q in random_sym(3),
        r in random_sym(3),
        a in -5.0..5.0f64,
        b in -5.0..5.0f64,
    ) {
        let pq = trace_inner(&p, &q).unwrap();
        let qp = trace_inner(&q, &p).unwrap();
        prop_assert_eq!(pq, qp);

        let combo = SymMatrix::lin_comb(a, &p, b, &q).unwrap();
        let lhs = trace_inner(&combo, &r).unwrap();
        let rhs = a * trace_inner(&p, &r).unwrap() + b * trace_inner(&q, &r).unwrap();
        let scale = 1.0 + lhs.abs().max(rhs.abs());
        prop_assert!((lhs - rhs).abs() <= 1e-10 * scale);
    }

    #[test]
    fn sqrt_squares_back_to_input(a in random_psd(3)) {
        let s = sqrt_psd(&a).unwrap();
        let mut ss = vec![0.0; 9];
        for i in 0..3 {
            for j in 0..3 {
                let mut acc = 0.0;
                for k in 0..3 {
                    acc += s.get(i, k) * s.get(k, j);
                }
                ss[i * 3 + j] = acc;
            }
        }
        let ss = SymMatrix::new(3, ss).unwrap();
        let err = ss.sub(&a).unwrap().frobenius_norm();
        prop_assert!(err <= 1e-8 * a.frobenius_norm().max(1.0), "err = {err}");
    }

    #[test]
    fn eig_reconstruction_and_orthonormality(a in random_sym(3)) {
        let dec = eig(&a).unwrap();
        let rebuilt = dec.reassemble(|l| l);
        let scale = a.frobenius_norm().max(1.0);
        prop_assert!(rebuilt.sub(&a).unwrap().frobenius_norm() <= 1e-10 * scale);
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = dec
                    .eigenvector(i)
                    .iter()
                    .zip(dec.eigenvector(j))
                    .map(|(x, y)| x * y)
                    .sum();
                let expected = if i == j { 1.0 } else { 0.0 };
                prop_assert!((dot - expected).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn fidelity_symmetric_bounded_and_selfconsistent(
        p in random_density(2),
        q in random_density(2),
    ) {
        let pq = fidelity(&p, &q).unwrap();
        let qp = fidelity(&q, &p).unwrap();
        prop_assert!((pq - qp).abs() <= 1e-9);
        prop_assert!((0.0..=1.0).contains(&pq));
        prop_assert!(fidelity(&p, &p).unwrap() >= 1.0 - 1e-9);
    }

    #[test]
    fn pure_state_fidelity_matches_quadratic_form(
        e in random_unit(3),
        rho in random_density(3),
    ) {
        let ev = l2_normalize("e", &e).unwrap();
        let fast = fidelity_pure(&ev, &rho).unwrap();
        let full = fidelity(&DensityMatrix::pure(&e).unwrap(), &rho).unwrap();
        prop_assert!((fast - full).abs() <= 1e-9, "fast {fast} vs full {full}");
    }
}
