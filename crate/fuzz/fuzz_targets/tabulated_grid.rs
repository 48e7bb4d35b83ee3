#![no_main]

use libfuzzer_sys::fuzz_target;
use rankstop::SymmetricDistribution;

fuzz_target!(|data: &[u8]| {
    let grid: Vec<(f64, f64)> = data
        .chunks_exact(16)
        .map(|c| {
            let x = f64::from_le_bytes(c[..8].try_into().unwrap());
            let f = f64::from_le_bytes(c[8..].try_into().unwrap());
            (x, f)
        })
        .collect();
    let Ok(dist) = SymmetricDistribution::tabulated(&grid) else { return };
    for i in 1..64 {
        let u = i as f64 / 64.0;
        let x = dist.quantile(u).unwrap();
        assert!(x.is_finite());
        assert!((dist.cdf(x) - u).abs() < 1e-9, "round trip at {u}");
    }
});
