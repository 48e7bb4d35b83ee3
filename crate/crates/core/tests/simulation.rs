use rankstop::simulate::{estimate_expected_rank, estimate_expected_rank_detailed, estimate_pq_monte_carlo};
use rankstop::walk::StopAt;
use rankstop::{RelativeRankRule, RuleBranch, SimConfig, StoppingPolicy, SymmetricDistribution};

fn rule_a() -> StoppingPolicy {
    StoppingPolicy::ranks(RelativeRankRule::new(RuleBranch::A))
}

/// z-scores over independent seeds should look standard normal.
#[test]
fn standard_errors_are_calibrated() {
    let dist = SymmetricDistribution::laplace(1.0).unwrap();
    let zs: Vec<f64> = (0..50)
        .map(|seed| {
            let r = estimate_expected_rank(&dist, &rule_a(), &SimConfig::new(20_000, 3, 7_000 + seed)).unwrap();
            r.z_score(73.0 / 32.0)
        })
        .collect();
    let mean = zs.iter().sum::<f64>() / zs.len() as f64;
    let sd = (zs.iter().map(|z| (z - mean).powi(2)).sum::<f64>() / (zs.len() - 1) as f64).sqrt();
    assert!((0.7..=1.4).contains(&sd), "sd of z-scores {sd}");
    assert!(mean.abs() < 0.6, "mean z {mean}");
}

#[test]
fn results_do_not_depend_on_workers() {
    let dist = SymmetricDistribution::uniform(1.0).unwrap();
    let cfg = SimConfig::new(300_000, 3, 11).with_chunk_size(7_919);
    let runs: Vec<_> = [1, 4, 16]
        .into_iter()
        .map(|w| estimate_expected_rank_detailed(&dist, &rule_a(), &cfg.with_workers(w)).unwrap())
        .collect();
    assert_eq!(runs[0], runs[1]);
    assert_eq!(runs[0], runs[2]);
    let again = estimate_expected_rank_detailed(&dist, &rule_a(), &cfg).unwrap();
    assert_eq!(runs[0], again);
    assert_eq!(runs[0].1.len(), 300_000usize.div_ceil(7_919));
}

#[test]
fn seeds_change_results() {
    let dist = SymmetricDistribution::uniform(1.0).unwrap();
    let a = estimate_expected_rank(&dist, &rule_a(), &SimConfig::new(50_000, 3, 1)).unwrap();
    let b = estimate_expected_rank(&dist, &rule_a(), &SimConfig::new(50_000, 3, 2)).unwrap();
    assert_ne!(a.mean_rank, b.mean_rank);
}

#[test]
fn stopping_immediately_ranks_half_the_walk() {
    for dist in [SymmetricDistribution::uniform(1.0).unwrap(), SymmetricDistribution::power_fold(0.05).unwrap()] {
        let r = estimate_expected_rank(&dist, &StoppingPolicy::ranks(StopAt(0)), &SimConfig::new(400_000, 3, 3))
            .unwrap();
        assert!(r.within(2.5, 3.0), "{}: {} ± {}", dist.label(), r.mean_rank, r.std_error);
        assert_eq!(r.stop_time_histogram, vec![400_000, 0, 0, 0]);
    }
}

#[test]
fn heavy_concentration_keeps_exact_orderings() {
    // most steps are tiny next to the largest one; rounded sums would tie
    let dist = SymmetricDistribution::power_fold(0.05).unwrap();
    let r = estimate_expected_rank(&dist, &rule_a(), &SimConfig::new(400_000, 3, 19)).unwrap();
    let pq = estimate_pq_monte_carlo(&dist, &SimConfig::new(400_000, 3, 23)).unwrap();
    assert_eq!(r.ties_resampled, 0);
    assert!(r.mean_rank > 109.0 / 48.0 - 4.0 * r.std_error);
    assert!(pq.p < 1.0 / 960.0 + pq.error_bound);
}

#[test]
fn monte_carlo_pq_brackets_quadrature() {
    let dist = SymmetricDistribution::laplace(1.0).unwrap();
    let pq = estimate_pq_monte_carlo(&dist, &SimConfig::new(4_000_000, 3, 29)).unwrap();
    assert!((pq.p - 1.0 / 192.0).abs() <= pq.error_bound, "{} ± {}", pq.p, pq.error_bound);
}
