#![no_main]

use libfuzzer_sys::fuzz_target;
use randlu::formats::parse_config;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        let _ = parse_config(s);
    }
});
