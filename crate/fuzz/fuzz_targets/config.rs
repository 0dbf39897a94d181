#![no_main]

use libfuzzer_sys::fuzz_target;
use scg_model::Config;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(c) = Config::from_json(text) {
        let json = serde_json::to_string(&c).unwrap();
        assert_eq!(Config::from_json(&json).unwrap(), c);
        let _ = c.param_count();
    }
});
