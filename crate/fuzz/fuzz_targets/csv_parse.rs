//! Fuzz the CSV table parser: no panics on arbitrary text, and parsed tables
//! re-render to values that parse back bitwise-identically.

#![no_main]

use libfuzzer_sys::fuzz_target;
use switchnet_core::plot::{parse_csv, to_csv};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(rows) = parse_csv(text) {
        if rows.is_empty() {
            return;
        }
        let cols = rows[0].len();
        if cols == 0 {
            return;
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let rendered = to_csv(&flat, rows.len(), cols).expect("shape is consistent");
        let back = parse_csv(&rendered).expect("rendered table must parse");
        let back_flat: Vec<f64> = back.into_iter().flatten().collect();
        // non-finite values never parse, so bitwise comparison is well-defined
        let a: Vec<u64> = flat.iter().map(|v| v.to_bits()).collect();
        let b: Vec<u64> = back_flat.iter().map(|v| v.to_bits()).collect();
        assert_eq!(a, b, "CSV values must round-trip at full precision");
    }
});
