#![no_main]

use libfuzzer_sys::fuzz_target;
use rangeseg::cloud_io::{read_labels, write_labels};

fuzz_target!(|data: &[u8]| {
    if let Ok(labels) = read_labels(data) {
        let bytes = write_labels(&labels).expect("decoded labels re-encode");
        let again = read_labels(&bytes).expect("re-encoded labels decode");
        assert_eq!(again.semantic, labels.semantic);
        assert_eq!(bytes, data);
    }
});
