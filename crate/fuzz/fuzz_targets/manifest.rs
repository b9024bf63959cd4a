#![no_main]

use cream_core::snapshot::parse_manifest;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = parse_manifest(data) {
        let out = serde_json::to_vec(&m).unwrap();
        assert_eq!(parse_manifest(&out).unwrap(), m);
    }
});
