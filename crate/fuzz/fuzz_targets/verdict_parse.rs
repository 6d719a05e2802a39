#![no_main]
use fba2d_core::oracles::http::{encode_verdict, parse_verdict};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(label) = parse_verdict(data) {
        assert_eq!(parse_verdict(encode_verdict(label).as_bytes()).unwrap(), label);
    }
});
