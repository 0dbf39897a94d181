#![no_main]

use libfuzzer_sys::fuzz_target;
use scg_core::lex;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(tokens) = lex(text) {
            for t in &tokens {
                assert!(!t.text.is_empty());
            }
        }
    }
});
