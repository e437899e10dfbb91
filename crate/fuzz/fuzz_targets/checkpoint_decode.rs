//! Fuzz the parameter-checkpoint reader: decoding must never panic, and any
//! accepted blob must re-encode byte-exactly.

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(params) = switchnet_core::checkpoint::decode(data) {
        let bytes = switchnet_core::checkpoint::encode(&params);
        assert_eq!(bytes, data, "accepted checkpoint must round-trip byte-exactly");
    }
});
