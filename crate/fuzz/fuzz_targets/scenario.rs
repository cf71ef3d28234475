#![no_main]

use crdtwb::harness::parse_scenario;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    match parse_scenario(text) {
        Ok(s) => {
            let again = parse_scenario(&s.to_json()).expect("printed scenarios parse");
            assert_eq!(again, s);
        }
        Err(e) => assert!(!e.errors.is_empty()),
    }
});
