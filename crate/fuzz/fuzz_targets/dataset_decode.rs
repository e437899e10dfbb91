//! Fuzz the binary dataset reader: arbitrary bytes must either decode into a
//! dataset that re-encodes to exactly the same bytes, or fail cleanly.

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(ds) = switchnet_core::data::decode(data) {
        let bytes = switchnet_core::data::encode(&ds);
        assert_eq!(bytes, data, "accepted dataset must round-trip byte-exactly");
    }
});
