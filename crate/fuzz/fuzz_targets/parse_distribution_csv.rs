#![no_main]

use libfuzzer_sys::fuzz_target;
use screening_core::export::{distribution_csv, parse_distribution_csv};

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(g) = parse_distribution_csv(s) {
        // anything accepted must survive a write/read cycle
        let text = distribution_csv(&g);
        let back = parse_distribution_csv(&text).expect("re-read of written distribution");
        assert_eq!(distribution_csv(&back), text);
    }
});
