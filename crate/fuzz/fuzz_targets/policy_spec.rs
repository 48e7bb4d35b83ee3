#![no_main]

use libfuzzer_sys::fuzz_target;
use rankstop::report::{PolicySpec, Tolerances};
use rankstop::SymmetricDistribution;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(spec) = PolicySpec::parse(text) else { return };
    if let PolicySpec::Thm2 = spec {
        return;
    }
    let dist = SymmetricDistribution::uniform(1.0).unwrap();
    let horizon = spec.horizon().unwrap_or(3);
    if horizon <= 8 {
        spec.build(&dist, horizon, &Tolerances::default()).unwrap();
    }
});
