#![no_main]

//! Config parser fuzz harness: arbitrary text must never panic, and any
//! config that parses must snapshot to a parseable fixed point.

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = ris::config::parse(text) {
        let snap = cfg.to_snapshot();
        let reparsed = ris::config::parse(&snap).expect("snapshot must parse");
        assert_eq!(reparsed.to_snapshot(), snap);
    }
});
