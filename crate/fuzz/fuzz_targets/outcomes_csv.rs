#![no_main]

use libfuzzer_sys::fuzz_target;
use longpeer::dataset::parse_outcomes;

fuzz_target!(|data: &[u8]| {
    if let Ok(table) = parse_outcomes(data) {
        for (_, t, y, x) in &table.rows {
            assert!(t.is_finite() && y.is_finite());
            assert_eq!(x.len(), table.covariate_names.len());
        }
    }
});
