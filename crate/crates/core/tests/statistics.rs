//! Seeded statistical checks of the simulator, the oracle and the sampler.

use statrs::distribution::{ChiSquared, ContinuousCDF};

use epl_core::diagnostics::geweke_joint_test;
use epl_core::experiments::{exact_rho_posterior_oracle, recovery_experiment, simulate_dataset};
use epl_core::sampler::{chain_rng, ChainConfig, SwapRule};

#[test]
fn simulated_reference_orders_are_uniform() {
    let mut rng = chain_rng(99, 0);
    let draws = 16_000;
    let mut counts = [0usize; 16];
    for _ in 0..draws {
        counts[simulate_dataset(5, 1, &mut rng).unwrap().rho.code_index()] += 1;
    }
    let expected = draws as f64 / 16.0;
    let chi2: f64 = counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    let critical = ChiSquared::new(15.0).unwrap().inverse_cdf(0.95);
    assert!(chi2 < critical, "chi2 = {chi2}, counts = {counts:?}");
}

#[test]
fn oracle_is_symmetric_for_two_items() {
    let sim = simulate_dataset(2, 25, &mut chain_rng(4, 0)).unwrap();
    let est = exact_rho_posterior_oracle(
        2,
        sim.dataset.orderings(),
        &ChainConfig::default(),
        200_000,
        &mut chain_rng(4, 1),
    )
    .unwrap();
    for (p, se) in est.probs.iter().zip(&est.std_errors) {
        assert!((p - 0.5).abs() < 4.0 * se, "p = {p}, se = {se}");
    }
    assert!((est.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn oracle_error_shrinks_with_draws() {
    let sim = simulate_dataset(3, 8, &mut chain_rng(6, 0)).unwrap();
    let cfg = ChainConfig::default();
    let small = exact_rho_posterior_oracle(
        3,
        sim.dataset.orderings(),
        &cfg,
        20_000,
        &mut chain_rng(6, 1),
    )
    .unwrap();
    let large = exact_rho_posterior_oracle(
        3,
        sim.dataset.orderings(),
        &cfg,
        320_000,
        &mut chain_rng(6, 2),
    )
    .unwrap();
    // 16 times the draws: a quarter of the error
    for (a, b) in small.std_errors.iter().zip(&large.std_errors) {
        let ratio = a / b;
        assert!((3.0..5.3).contains(&ratio), "ratio {ratio}");
    }
}

#[test]
fn three_item_reference_orders_are_uniform_under_the_joint_check() {
    let report =
        geweke_joint_test(3, 8, &ChainConfig::default(), 20_000, &mut chain_rng(12, 0)).unwrap();
    assert!(report.passed, "{:?}", report.checks);
    assert_eq!(report.rho_frequencies.len(), 4);
    for f in &report.rho_frequencies {
        assert!((f - 0.25).abs() < 0.05, "{:?}", report.rho_frequencies);
    }
}

#[test]
fn proposal_weighted_swap_rule_is_not_invariant() {
    let config = ChainConfig {
        swap_rule: SwapRule::ProposalWeighted,
        ..ChainConfig::default()
    };
    let report = geweke_joint_test(4, 10, &config, 20_000, &mut chain_rng(0, 0)).unwrap();
    assert!(!report.passed);
}

#[test]
fn recovery_improves_with_more_subjects() {
    let config = ChainConfig {
        iterations: 2_000,
        burn_in: 500,
        ..ChainConfig::default()
    };
    let grid = [(4, 20), (4, 100), (4, 500)];
    let reports = recovery_experiment(&grid, 10, &config, 3).unwrap();
    let rates: Vec<f64> = reports.iter().map(|r| r.percent_recovered).collect();
    let inversions = rates.windows(2).filter(|w| w[1] < w[0]).count();
    assert!(inversions <= 1, "{rates:?}");
    assert!(rates[2] >= 80.0, "{rates:?}");
    for r in &reports {
        assert!(r.records.iter().all(|x| (0.0..=1.0).contains(&x.distance)));
        assert_eq!(r.records.len(), 10);
    }
}
