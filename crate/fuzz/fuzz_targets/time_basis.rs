#![no_main]

use libfuzzer_sys::fuzz_target;
use longpeer::dataset::TimeStructure;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(ts) = TimeStructure::parse(text) {
        for t in [0.0, 0.5, 3.0] {
            assert_eq!(ts.row(t).len(), ts.n_components());
        }
        let again = TimeStructure::parse(&ts.label()).expect("label parses");
        assert_eq!(again.n_components(), ts.n_components());
    }
});
