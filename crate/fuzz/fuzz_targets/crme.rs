#![no_main]

use cream_core::harness::EmbeddingStore;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(store) = EmbeddingStore::parse(data) {
        let mut out = Vec::new();
        store.write(&mut out).unwrap();
        let again = EmbeddingStore::parse(&out).unwrap();
        assert_eq!(again.len(), store.len());
    }
});
