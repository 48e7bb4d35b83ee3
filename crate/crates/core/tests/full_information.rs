use proptest::prelude::*;
use rankstop::fullinfo::{threshold_quantile_floor, value_bounds};
use rankstop::oracle::grid_dp_full_info;
use rankstop::{FullInfo, SymmetricDistribution};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Ranks ignore scale: `x1*` scales with the law and `V` does not move.
    #[test]
    fn scale_invariance(scale in 0.05..20.0f64) {
        for (base, scaled) in [
            (SymmetricDistribution::uniform(1.0).unwrap(), SymmetricDistribution::uniform(scale).unwrap()),
            (SymmetricDistribution::laplace(1.0).unwrap(), SymmetricDistribution::laplace(scale).unwrap()),
        ] {
            let a = FullInfo::new(&base).solve().unwrap();
            let b = FullInfo::new(&scaled).solve().unwrap();
            prop_assert!((b.x1_star - scale * a.x1_star).abs() <= 1e-8 * scale.max(1.0));
            prop_assert!((a.value - b.value).abs() <= 1e-8);
        }
    }

    #[test]
    fn power_laws_respect_the_bounds(delta in 0.05..5.0f64) {
        let d = SymmetricDistribution::power_fold(delta).unwrap();
        let sol = FullInfo::new(&d).solve().unwrap();
        let (lo, hi) = value_bounds();
        prop_assert!(sol.value >= lo - 1e-9 && sol.value <= hi + 1e-9, "V = {}", sol.value);
        prop_assert!(sol.f_at_threshold >= threshold_quantile_floor() - 1e-9);
        prop_assert!(sol.diagnostics.threshold_residual.abs() <= 1e-9);
    }

    #[test]
    fn w1_nonincreasing(a in 0.01..3.0f64, b in 0.01..3.0f64) {
        let d = SymmetricDistribution::laplace(1.0).unwrap();
        let fi = FullInfo::new(&d);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        for (x, y) in [(lo, hi), (-hi, -lo)] {
            prop_assert!(fi.w1(y).unwrap() <= fi.w1(x).unwrap() + 1e-9);
        }
    }
}

#[test]
fn dp_converges_to_quadrature() {
    let d = SymmetricDistribution::laplace(1.0).unwrap();
    let v = FullInfo::new(&d).solve().unwrap().value;
    let coarse = (grid_dp_full_info(&d, 201, 3).unwrap().value - v).abs();
    let fine = (grid_dp_full_info(&d, 1201, 3).unwrap().value - v).abs();
    assert!(fine < 2e-3 && fine < coarse, "coarse {coarse:.2e}, fine {fine:.2e}");
}
