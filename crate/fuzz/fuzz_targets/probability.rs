#![no_main]

use libfuzzer_sys::fuzz_target;
use num_rational::Rational64;
use rankstop::report::parse_probability;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(p) = parse_probability(text) {
        assert!(p >= Rational64::from_integer(0) && p <= Rational64::from_integer(1));
    }
});
