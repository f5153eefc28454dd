mod common;

use proptest::prelude::*;

// Smaller versions of the acceptance property suites, one seed per case.
proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn printed_trees_reparse(seed in any::<u64>()) {
        prop_assert_eq!(common::roundtrip_trees(100, seed), Ok(()));
    }

    #[test]
    fn evaluator_matches_text_oracle(seed in any::<u64>()) {
        prop_assert!(common::evaluator_agreement(200, seed, 5).is_ok());
    }

    #[test]
    fn variation_stays_within_limits(seed in any::<u64>()) {
        prop_assert_eq!(common::gp_closure(400, seed), Ok(()));
    }

    #[test]
    fn negation_complements_fitness(seed in any::<u64>()) {
        prop_assert!(common::fitness_complementarity(20, seed).is_ok());
    }

    #[test]
    fn reduction_is_fp_free(seed in any::<u64>()) {
        prop_assert_eq!(common::reduction_fp_free(20, seed), Ok(()));
    }
}

#[test]
fn oracle_sees_errors_and_rounding() {
    let errors = common::evaluator_agreement(5_000, 7, 5).unwrap();
    // the value pool includes zero and 1e300, so some pairs must error
    assert!(errors > 0);
    assert_eq!(common::oracle_round(0.30000000000000004, 9), 0.3);
    assert_eq!(common::oracle_round(2.5, 0), 2.0);
    assert_eq!(common::oracle_round(3.5, 0), 4.0);
}

#[test]
fn complementarity_is_exercised() {
    assert!(common::fitness_complementarity(300, 11).unwrap() > 50);
}
