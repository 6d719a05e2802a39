#![no_main]
use fba2d_core::AttackTrace;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = AttackTrace::from_jsonl(text);
    }
});
