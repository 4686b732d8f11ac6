#![no_main]

//! Metrics CSV parser fuzz harness: arbitrary text must never panic, and
//! parsed rows must round-trip through the writer.

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(rows) = ris::metrics::parse_csv(text) {
        let rewritten = ris::metrics::to_csv(&rows);
        let again = ris::metrics::parse_csv(&rewritten).expect("rewritten metrics must parse");
        assert_eq!(again, rows);
    }
});
