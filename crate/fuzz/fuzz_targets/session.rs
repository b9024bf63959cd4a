#![no_main]

use cream_core::harness::parse_session;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = parse_session(0, data) {
        let mut out = Vec::new();
        s.write_jsonl(&mut out).unwrap();
        assert_eq!(parse_session(0, &out).unwrap(), s);
    }
});
