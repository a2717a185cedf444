#![no_main]

//! Input is `outcomes CSV`, a `0x00` byte, then `curves CSV`.

use libfuzzer_sys::fuzz_target;
use longpeer::dataset::{build_design, parse_dataset, DesignOptions, RandomEffectSpec, SampleGrid, TimeStructure};

fuzz_target!(|data: &[u8]| {
    let Some(split) = data.iter().position(|&b| b == 0) else { return };
    let (outcomes, curves) = (&data[..split], &data[split + 1..]);
    let p = curves
        .split(|&b| b == b'\n')
        .next()
        .map(|h| h.iter().filter(|&&b| b == b',').count().saturating_sub(1))
        .unwrap_or(0);
    if !(1..=64).contains(&p) {
        return;
    }
    let Ok(grid) = SampleGrid::equispaced(p) else { return };
    if let Ok(ds) = parse_dataset(outcomes, curves, grid, RandomEffectSpec::default()) {
        let _ = build_design(&ds, &TimeStructure::linear(), &DesignOptions::default());
    }
});
