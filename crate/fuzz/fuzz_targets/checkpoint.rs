#![no_main]

use cream_core::trainer::EncoderAdapter;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(a) = EncoderAdapter::read_checkpoint(data) {
        let mut out = Vec::new();
        a.write_checkpoint(&mut out).unwrap();
        assert_eq!(EncoderAdapter::read_checkpoint(&out).unwrap(), a);
    }
});
