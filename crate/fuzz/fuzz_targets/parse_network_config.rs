#![no_main]

use libfuzzer_sys::fuzz_target;
use rangeseg::net::parse_network_config;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = parse_network_config(text);
    }
});
