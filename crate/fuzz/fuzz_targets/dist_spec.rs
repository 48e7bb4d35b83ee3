#![no_main]

use libfuzzer_sys::fuzz_target;
use rankstop::DistSpec;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(spec) = DistSpec::from_json(text) else { return };
    let Ok(dist) = spec.build() else { return };
    // a law that built must be symmetric and round-trip through JSON
    for x in [0.0, 0.5, 1.0, 3.0] {
        let s = dist.cdf(x) + dist.cdf(-x);
        assert!((s - 1.0).abs() < 1e-9, "{spec:?}: F({x}) + F(-{x}) = {s}");
    }
    let again = DistSpec::from_json(&dist.spec().to_json()).unwrap();
    assert_eq!(again.build().unwrap().label(), dist.label());
});
