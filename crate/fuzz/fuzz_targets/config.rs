#![no_main]

use cream_core::harness::{RunConfig, SynthConfig};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(cfg) = RunConfig::from_json(data) {
        let out = serde_json::to_vec(&cfg).unwrap();
        assert_eq!(RunConfig::from_json(&out).unwrap(), cfg);
    }
    if let Ok(synth) = serde_json::from_slice::<SynthConfig>(data) {
        let _ = synth.validate();
    }
});
