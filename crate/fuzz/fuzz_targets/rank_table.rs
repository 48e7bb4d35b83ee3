#![no_main]

use libfuzzer_sys::fuzz_target;
use num_rational::Rational64;
use rankstop::oracle::evaluate_policy_exact;
use rankstop::RankPolicyTable;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(table) = RankPolicyTable::from_json(text) else { return };
    let back = RankPolicyTable::from_json(&table.to_json()).unwrap();
    assert_eq!(back, table);
    if table.horizon() <= 3 {
        let v = evaluate_policy_exact(&table, table.horizon(), Rational64::new(1, 192)).unwrap();
        assert!(v >= Rational64::from_integer(1));
    }
});
