#![no_main]

use libfuzzer_sys::fuzz_target;
use rangeseg::cloud_io::{read_point_cloud, write_point_cloud};

fuzz_target!(|data: &[u8]| {
    if let Ok(cloud) = read_point_cloud(data) {
        let bytes = write_point_cloud(&cloud);
        assert_eq!(bytes, data);
    }
});
