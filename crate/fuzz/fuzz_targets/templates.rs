#![no_main]

use kgqa_core::dataset::{parse_templates, write_templates};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(templates) = parse_templates(data) else {
        return;
    };
    let mut out = Vec::new();
    write_templates(&mut out, &templates).unwrap();
    let again = parse_templates(out.as_slice()).expect("written templates must parse");
    assert_eq!(again, templates);
});
