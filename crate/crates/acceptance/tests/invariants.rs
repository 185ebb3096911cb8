use ade_acceptance::{invariants, Fixture};
use proptest::prelude::*;

fn fixture() -> impl Strategy<Value = Fixture> {
    any::<u64>().prop_map(Fixture::generate)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn effective_size_equality(fx in fixture()) {
        invariants::effective_size_equality(&fx).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn placebo_noop(seed in any::<u64>()) {
        invariants::placebo_noop(seed).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn scale_invariance(fx in fixture()) {
        invariants::scale_invariance(&fx).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn category_split_conservation(fx in fixture()) {
        invariants::category_split_conservation(&fx).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn result_set_monotonicity(fx in fixture()) {
        invariants::result_set_monotonicity(&fx).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn exclusion_soundness(fx in fixture()) {
        invariants::exclusion_soundness(&fx).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn taxonomy_oracle_equivalence(fx in fixture()) {
        invariants::taxonomy_oracle_equivalence(&fx).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn aggregation_matches_brute_force(fx in fixture()) {
        invariants::aggregation_oracle(&fx, 1e-9).map_err(TestCaseError::fail)?;
    }
}

#[test]
fn fixtures_are_deterministic_and_bounded() {
    for seed in 0..50 {
        let a = Fixture::generate(seed);
        let b = Fixture::generate(seed);
        assert_eq!(a.dataset, b.dataset);
        assert_eq!(a.query, b.query);
        assert!(a.dataset.trials().count() <= ade_acceptance::fixture::MAX_TRIALS);
    }
}
