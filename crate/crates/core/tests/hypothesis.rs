use plateau::hypotest::{
    counterexample_family, many_sample_success_bound, one_norm, optimal_success_probability, parity_test_error,
    product_one_norm_check, simulate_hypothesis_test, simulate_parity_test, DiscreteDistribution,
};
use plateau::rng::RngStream;
use proptest::prelude::*;

fn normalised(raw: &[f64]) -> DiscreteDistribution {
    let total: f64 = raw.iter().sum();
    DiscreteDistribution::explicit(raw.iter().map(|x| x / total).collect()).unwrap()
}

fn pair_strategy(max: usize) -> impl Strategy<Value = (DiscreteDistribution, DiscreteDistribution)> {
    (2..=max).prop_flat_map(|m| {
        (prop::collection::vec(0.01f64..1.0, m), prop::collection::vec(0.01f64..1.0, m))
            .prop_map(|(a, b)| (normalised(&a), normalised(&b)))
    })
}

#[test]
fn likelihood_test_reaches_single_sample_optimum() {
    let p = normalised(&[0.75, 0.25]);
    let q = normalised(&[0.25, 0.75]);
    let exact = optimal_success_probability(&p, &q).unwrap();
    let out = simulate_hypothesis_test(&p, &q, 1, 10_000, &RngStream::new(31, 0)).unwrap();
    assert!((out.success_rate - exact).abs() <= 3.0 * out.sigma_at(exact));
}

#[test]
fn parity_monte_carlo_matches() {
    let expected = parity_test_error(3).unwrap();
    let out = simulate_parity_test(1 << 20, 3, 100_000, &RngStream::new(32, 0)).unwrap();
    assert!((out.success_rate - expected).abs() <= 3.0 * out.sigma_at(expected));
}

#[test]
fn counterexample_is_far_apart_per_shot() {
    let (pa, pf) = counterexample_family(1 << 40).unwrap();
    assert_eq!(one_norm(&pa, &pf).unwrap(), 1.0);
    assert_eq!(many_sample_success_bound(&pa, &pf, 1).unwrap(), 0.75);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn product_norm_within_sum((p1, q1) in pair_strategy(4), (p2, q2) in pair_strategy(4), (p3, q3) in pair_strategy(3)) {
        let (exact, bound) = product_one_norm_check(&[(p1, q1), (p2, q2), (p3, q3)]).unwrap();
        prop_assert!(exact <= bound + 1e-12);
        prop_assert!(exact <= 2.0 + 1e-12);
    }

    #[test]
    fn one_norm_is_a_metric((p, q) in pair_strategy(6)) {
        let d = one_norm(&p, &q).unwrap();
        prop_assert!((0.0..=2.0 + 1e-12).contains(&d));
        prop_assert_eq!(d, one_norm(&q, &p).unwrap());
        prop_assert_eq!(one_norm(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn empirical_rate_respects_bound((p, q) in pair_strategy(4), n in 1u64..6, seed in 0u64..1000) {
        let out = simulate_hypothesis_test(&p, &q, n, 2000, &RngStream::new(seed, 1)).unwrap();
        prop_assert!(out.success_rate <= out.bound + 3.0 * out.sigma_at(out.bound.min(0.999)) + 1e-12);
    }
}
