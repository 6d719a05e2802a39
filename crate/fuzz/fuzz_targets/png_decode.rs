#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(img) = fba2d_core::decode_png(data) {
        assert!(img.in_unit_range());
        // Decoded images are 8-bit, so re-encoding must reproduce them exactly.
        let again = fba2d_core::decode_png(&fba2d_core::encode_png(&img).unwrap()).unwrap();
        assert_eq!(again, img);
    }
});
