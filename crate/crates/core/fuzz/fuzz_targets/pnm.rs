#![no_main]
use libfuzzer_sys::fuzz_target;
use shadowleak::pnm::parse;
use shadowleak::transport::OccluderMask;

fuzz_target!(|data: &[u8]| {
    if let Ok(img) = parse(data) {
        assert_eq!(img.data.len(), img.width * img.height);
        assert!(img.data.iter().all(|&v| v <= img.maxval));
        let opaque = img.data.iter().map(|&v| u8::from(v != 0)).collect();
        let _ = OccluderMask::from_bitmap(img.height, img.width, opaque);
    }
});
