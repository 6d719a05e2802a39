#![no_main]
use fba2d_harness::dataset::parse_manifest;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(entries) = parse_manifest(data) {
        for e in entries {
            let p = std::path::Path::new(&e.path);
            assert!(!p.is_absolute());
            assert!(!p.components().any(|c| c == std::path::Component::ParentDir));
        }
    }
});
