#![no_main]

use kgqa_core::kge::{decode_checkpoint, encode_checkpoint};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok((model, hashes)) = decode_checkpoint(data) {
        assert_eq!(encode_checkpoint(&model, hashes), data);
    }
});
