#![no_main]

use libfuzzer_sys::fuzz_target;
use screening_core::export::parse_mechanism_csv;
use screening_core::mechanism::PostPromise;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        let _ = parse_mechanism_csv(s, 1.0, PostPromise::Continuation);
        let _ = parse_mechanism_csv(s, 0.5, PostPromise::NoDelay { u1: 0.25 });
    }
});
