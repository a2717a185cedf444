#![no_main]

use libfuzzer_sys::fuzz_target;
use longpeer::penalty::{make_decomposition, parse_q_basis};

fuzz_target!(|data: &[u8]| {
    if let Ok(q) = parse_q_basis(data) {
        assert!(q.iter().all(|v| v.is_finite()));
        if q.nrows() <= 64 && q.ncols() <= 64 {
            let _ = make_decomposition(&q, 10.0, 1.0);
        }
    }
});
