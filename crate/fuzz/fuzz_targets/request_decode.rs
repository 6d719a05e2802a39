#![no_main]
use fba2d_core::oracles::http::decode_request;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(img) = decode_request(data) {
        assert!(img.in_unit_range());
    }
});
