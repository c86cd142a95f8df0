#![no_main]

use kgqa_core::question::{decode_encoder, encode_encoder};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(enc) = decode_encoder(data) {
        let bytes = encode_encoder(&enc);
        let again = decode_encoder(&bytes).expect("re-encoded encoder must decode");
        assert_eq!(encode_encoder(&again), bytes);
    }
});
