#![no_main]

use libfuzzer_sys::fuzz_target;
use longpeer::dataset::parse_grid_spec;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(grid) = parse_grid_spec(text) {
        assert!(grid.points().windows(2).all(|w| w[0] < w[1]));
    }
});
