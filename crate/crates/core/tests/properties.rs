//! Randomized invariants of binning, streaming and the error measures.

use dpbin_core::{
    build_binning, verify_binning, BinnedMatrixView, BinningParams, LowerTriangularMatrix,
    Partition, StreamingEvaluator, ToeplitzSpec,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Dense lower-triangular matrices with entries in `[0.01, 1]`.
fn positive_matrix(max_n: usize) -> impl Strategy<Value = LowerTriangularMatrix> {
    (1..=max_n).prop_flat_map(|n| {
        prop::collection::vec(0.01f64..1.0, n * n)
            .prop_map(move |v| LowerTriangularMatrix::from_fn(n, |i, j| v[i * n + j]))
    })
}

fn binning_params() -> impl Strategy<Value = BinningParams> {
    (0.05f64..0.999, 1e-4f64..0.9).prop_map(|(c, tau)| BinningParams::new(c, tau).unwrap())
}

fn spec() -> impl Strategy<Value = ToeplitzSpec> {
    (1usize..=96, 0.9f64..=1.0, 0.0f64..0.95).prop_filter_map("beta < alpha", |(n, a, b)| {
        ToeplitzSpec::new(a, b * a, n).ok()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn binning_is_valid_for_positive_sources(m in positive_matrix(24), p in binning_params()) {
        let b = build_binning(&m, &p);
        prop_assert_eq!(b.n(), m.n());
        prop_assert!(verify_binning(&b));
        prop_assert!(b.size() <= m.n());
    }

    #[test]
    fn streaming_matches_materialized(spec in spec(), p in binning_params(), seed in any::<u64>()) {
        let rows = spec.sqrt_rows();
        let n = spec.n();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let view = BinnedMatrixView::new(&rows, build_binning(&rows, &p)).unwrap();
        let dense = view.materialize().matvec(&z).unwrap();
        let (streamed, state) = StreamingEvaluator::new(&rows, p).run(&z).unwrap();
        for (s, d) in streamed.iter().zip(&dense) {
            prop_assert!((s - d).abs() <= 1e-10 * d.abs().max(1.0));
        }
        prop_assert_eq!(state.peak_len(), view.space_complexity());
    }

    #[test]
    fn partition_text_round_trips(widths in prop::collection::vec(1usize..6, 0..12)) {
        let mut start = 1;
        let mut text = Vec::new();
        for w in widths {
            text.push(format!("{}-{}", start, start + w - 1));
            start += w;
        }
        let text = text.join(",");
        let p: Partition = text.parse().unwrap();
        prop_assert_eq!(p.covered(), start - 1);
        prop_assert_eq!(p.to_string(), text);
    }

    #[test]
    fn norm_relations(m in positive_matrix(16)) {
        let n = m.n() as f64;
        let (f, r) = (m.frobenius_norm(), m.row_max_norm());
        prop_assert!(r <= f * (1.0 + 1e-12));
        prop_assert!(f <= n.sqrt() * r * (1.0 + 1e-12));
    }

    #[test]
    fn binned_entries_stay_between_interval_endpoints(spec in spec(), p in binning_params()) {
        let rows = spec.sqrt_rows();
        let b = LowerTriangularMatrix::from_toeplitz_coeffs(spec.sqrt_coeffs());
        let view = BinnedMatrixView::new(&rows, build_binning(&rows, &p)).unwrap();
        let n = spec.n();
        for i in 1..=n {
            for iv in view.binning().partition(i) {
                let (lo, hi) = (b[(i - 1, iv.end - 1)], b[(i - 1, iv.start - 1)]);
                for j in iv.start..=iv.end {
                    let v = view.approx_entry(i, j);
                    prop_assert!(lo.min(hi) - 1e-15 <= v && v <= lo.max(hi) + 1e-15);
                }
            }
        }
    }
}
