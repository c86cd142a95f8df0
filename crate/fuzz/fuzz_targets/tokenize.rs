#![no_main]

use kgqa_core::gazetteer::normalize_tokens;
use kgqa_core::question::tokenize;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let text = String::from_utf8_lossy(data);
    assert!(tokenize(&text).iter().all(|t| !t.is_empty()));
    let chars = text.chars().count();
    let mut last = 0;
    for token in normalize_tokens(&text) {
        assert!(!token.text.is_empty());
        assert!(token.span.start >= last && token.span.start < token.span.end && token.span.end <= chars);
        last = token.span.end;
    }
});
