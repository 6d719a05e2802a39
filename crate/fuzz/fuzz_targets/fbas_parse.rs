#![no_main]
use fba2d_core::surrogate::SurrogateFile;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(file) = SurrogateFile::parse(data) {
        let bytes = file.to_bytes();
        assert_eq!(SurrogateFile::parse(&bytes).unwrap().to_bytes(), bytes);
    }
});
