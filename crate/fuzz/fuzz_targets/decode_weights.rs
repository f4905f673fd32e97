#![no_main]

use libfuzzer_sys::fuzz_target;
use rangeseg::net::{decode_weights, encode_weights};

fuzz_target!(|data: &[u8]| {
    if let Ok(entries) = decode_weights(data) {
        let bytes = encode_weights(&entries).expect("decoded entries re-encode");
        assert_eq!(bytes, data);
    }
});
