#![no_main]

use kgqa_core::question::{decode_classifier, encode_classifier};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(clf) = decode_classifier(data) {
        let bytes = encode_classifier(&clf);
        let again = decode_classifier(&bytes).expect("re-encoded classifier must decode");
        assert_eq!(encode_classifier(&again), bytes);
    }
});
