//! The 24-ordering table against a direct numerical integration: for each
//! `(X_1, X_2)` on a quantile grid, `X_3` falls in one of four intervals with
//! probability `F(b) - F(a)`, which fixes where `S_3` lands.

use rankstop::{PermutationTable, SymmetricDistribution};

fn integrated_orderings(dist: &SymmetricDistribution, m: usize) -> Vec<([usize; 4], f64)> {
    let mut totals: Vec<([usize; 4], f64)> = Vec::new();
    // offsets differ so that no grid pair cancels exactly
    let xs: Vec<f64> = (0..m).map(|i| dist.quantile((i as f64 + 0.5) / m as f64).unwrap()).collect();
    let ys: Vec<f64> = (0..m).map(|i| dist.quantile((i as f64 + 0.29) / m as f64).unwrap()).collect();
    let w = 1.0 / (m * m) as f64;
    for &x1 in &xs {
        for &x2 in &ys {
            let s = [0.0, x1, x1 + x2];
            let mut known = [0usize, 1, 2];
            known.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
            // S_3 = S_2 + X_3 sits above known[slot] iff X_3 > s[known[slot]] - S_2
            let cut: Vec<f64> = known.iter().map(|&t| s[t] - s[2]).collect();
            let mut upper = 1.0;
            for slot in 0..=3 {
                let lower = if slot < 3 { dist.cdf(cut[slot]) } else { 0.0 };
                let mass = (upper - lower) * w;
                upper = lower;
                let mut order = [0usize; 4];
                let mut it = known.iter();
                for (pos, o) in order.iter_mut().enumerate() {
                    *o = if pos == slot { 3 } else { *it.next().unwrap() };
                }
                match totals.iter_mut().find(|(o, _)| *o == order) {
                    Some((_, t)) => *t += mass,
                    None => totals.push((order, mass)),
                }
            }
        }
    }
    totals
}

fn compare(dist: SymmetricDistribution, p: f64, tol: f64) {
    let table = PermutationTable::new(p, 1.0 / 48.0 - p).unwrap();
    let oracle = integrated_orderings(&dist, 1200);
    for e in table.entries() {
        let got = oracle.iter().find(|(o, _)| *o == e.ordering).map(|x| x.1).unwrap_or(0.0);
        let err = (got - table.probability(e)).abs();
        assert!(err < tol, "{}: {} vs table {} ({})", e.label(), got, table.probability(e), dist.label());
    }
    let total: f64 = oracle.iter().map(|x| x.1).sum();
    assert!((total - 1.0).abs() < 1e-9);
}

#[test]
fn uniform_matches_table() {
    compare(SymmetricDistribution::uniform(1.0).unwrap(), 1.0 / 96.0, 1e-3);
}

#[test]
fn laplace_matches_table() {
    compare(SymmetricDistribution::laplace(1.0).unwrap(), 1.0 / 192.0, 1e-3);
}

#[test]
fn two_interval_law_matches_table() {
    compare(SymmetricDistribution::interval_union(1.0, 2.0).unwrap(), 1.0 / 48.0, 1e-3);
}

#[test]
fn table_is_a_distribution() {
    for p in [1e-6, 1.0 / 192.0, 1.0 / 96.0, 1.0 / 48.0] {
        let t = PermutationTable::new(p, 1.0 / 48.0 - p).unwrap();
        let probs = t.probabilities();
        assert_eq!(probs.len(), 24);
        assert!(probs.iter().all(|&x| x >= 0.0));
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        // reflection reverses the ordering and keeps the probability
        for e in t.entries() {
            let mut r = e.ordering;
            r.reverse();
            let i = t.index_of(&r).unwrap();
            assert_eq!(t.probability(&t.entries()[i]), t.probability(e));
        }
    }
}
