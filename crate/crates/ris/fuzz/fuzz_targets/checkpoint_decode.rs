#![no_main]

//! Checkpoint decoder fuzz harness: arbitrary bytes must never panic or
//! over-allocate, and anything that decodes must re-encode canonically.

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(params) = ris::checkpoint::from_bytes(data) {
        let bytes = ris::checkpoint::to_bytes(&params);
        let again = ris::checkpoint::from_bytes(&bytes).expect("re-encoded checkpoint must decode");
        assert_eq!(bytes, ris::checkpoint::to_bytes(&again));
    }
});
