#![no_main]

use libfuzzer_sys::fuzz_target;
use rangeseg::cloud_io::{decode_range_image, encode_range_image};

fuzz_target!(|data: &[u8]| {
    if let Ok(img) = decode_range_image(data) {
        let bytes = encode_range_image(&img);
        let again = decode_range_image(&bytes).expect("re-encoded image decodes");
        assert_eq!(encode_range_image(&again), bytes);
    }
});
