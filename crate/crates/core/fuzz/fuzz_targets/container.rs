#![no_main]
use libfuzzer_sys::fuzz_target;
use shadowleak::container::Container;
use shadowleak::mlclass::Classifier;

fuzz_target!(|data: &[u8]| {
    if let Ok(c) = Container::decode(data) {
        // f64 payloads re-encode to the same bytes
        if c.precision == shadowleak::container::Precision::F64 {
            assert_eq!(c.to_bytes(), data);
        }
        let _ = Classifier::from_container(&c);
    }
});
