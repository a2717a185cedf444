#![no_main]

use libfuzzer_sys::fuzz_target;
use longpeer::dataset::parse_curves;

fuzz_target!(|data: &[u8]| {
    if let Ok(rows) = parse_curves(data, None) {
        if let Some(first) = rows.first() {
            assert!(rows.iter().all(|r| r.w.len() == first.w.len()));
        }
    }
    let _ = parse_curves(data, Some(3));
});
