#![no_main]

use libfuzzer_sys::fuzz_target;
use rangeseg::train::parse_train_config;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = parse_train_config(text);
    }
});
