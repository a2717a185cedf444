#![no_main]

use libfuzzer_sys::fuzz_target;
use longpeer::simulate::SimulationScenario;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(sc) = SimulationScenario::from_json(text) {
        let back = SimulationScenario::from_json(&sc.to_json()).expect("serialized scenario parses");
        assert_eq!(back.to_json(), sc.to_json());
    }
});
