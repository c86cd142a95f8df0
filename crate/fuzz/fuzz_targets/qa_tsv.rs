#![no_main]

use kgqa_core::dataset::parse_qa_tsv;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(rows) = parse_qa_tsv(data) {
        for row in rows {
            assert!((1..=3).contains(&row.hops));
            assert!(!row.answers.is_empty());
        }
    }
});
