//! Structural features of random small parity-check matrices against
//! brute-force oracles.

mod common;

use advcomm_core::ldpc::ParityCheckMatrix;
use advcomm_core::vuln::{four_cycle_feature, svd_feature, two_hop_feature};
use common::{four_cycles_exhaustive, svd_feature_oracle, two_hop_bfs};
use proptest::prelude::*;

fn dense_h() -> impl Strategy<Value = Vec<Vec<u8>>> {
    (1usize..=10, 1usize..=20, 0.15f64..0.6).prop_flat_map(|(m, n, p)| {
        proptest::collection::vec(
            proptest::collection::vec(proptest::bool::weighted(p).prop_map(u8::from), n),
            m,
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, ..ProptestConfig::default() })]

    #[test]
    fn four_cycle_formula_matches_enumeration(d in dense_h()) {
        let h = ParityCheckMatrix::from_dense(&d).unwrap();
        prop_assert_eq!(four_cycle_feature(&h), four_cycles_exhaustive(&d));
    }

    #[test]
    fn two_hop_matches_bfs(d in dense_h()) {
        let h = ParityCheckMatrix::from_dense(&d).unwrap();
        prop_assert_eq!(two_hop_feature(&h), two_hop_bfs(&d));
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, ..ProptestConfig::default() })]

    #[test]
    fn svd_feature_matches_independent_svd(d in dense_h()) {
        let eps = 1e-6;
        let Some((want, k_want)) = svd_feature_oracle(&d, eps) else {
            return Err(TestCaseError::reject("ambiguous singular structure"));
        };
        let h = ParityCheckMatrix::from_dense(&d).unwrap();
        let (got, k) = svd_feature(&h, eps).unwrap();
        prop_assert_eq!(k, k_want);
        for (g, w) in got.iter().zip(&want) {
            prop_assert!((g - w).abs() <= 1e-8 * w.abs().max(1.0), "{} vs {}", g, w);
        }
    }
}
