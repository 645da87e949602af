#![no_main]

use libfuzzer_sys::fuzz_target;
use screening_core::config::parse_config;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        // no base directory, so csv-backed distributions are rejected without touching the filesystem
        let _ = parse_config(s, None);
    }
});
