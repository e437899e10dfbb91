//! Fuzz the key-value model-spec parser: no panics, and accepted specs must
//! survive a render/parse round trip unchanged.

#![no_main]

use libfuzzer_sys::fuzz_target;
use switchnet_core::model::ModelSpec;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(spec) = ModelSpec::parse(text) {
        let rendered = spec.to_text();
        let back = ModelSpec::parse(&rendered).expect("rendered spec must parse");
        assert_eq!(back, spec, "render/parse must be stable");
    }
});
