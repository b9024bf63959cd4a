#![no_main]

use cream_core::snapshot::{encode_sidecar, parse_sidecar};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = parse_sidecar(data) {
        // Every accepted file is canonical: f32 values survive the trip.
        assert_eq!(encode_sidecar(&s), data);
    }
});
